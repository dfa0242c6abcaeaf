use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use topicsim::config::{correlated_topics, uncorrelated_topics, BackendKind, CorrelationKind};
use topicsim::llm::OpinionBackend;
use topicsim::runner::{
    build_graph, read_beliefs_csv, recompute_metrics, run_experiment, ExperimentPreset, PresetName,
    Simulation,
};
use topicsim::{Error, Mechanism, SimulationConfig, SocialGraph};

#[derive(Parser)]
#[command(name = "topicsim", version, about = "Seeded multi-topic opinion dynamics on scale-free graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its artifacts.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Output directory.
        #[arg(long, short, default_value = "runs/latest")]
        out: PathBuf,
        /// Also write every prompt and reply to prompts.jsonl.
        #[arg(long)]
        verbose: bool,
    },
    /// Run every scenario of a preset (single-topic, multi-topic-uncorrelated,
    /// correlation-sweep, ablation-suite).
    Experiment {
        preset: PresetName,
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Seeds to sweep: `a..b` (half-open), `a..=b`, or a comma list. Defaults to --seed.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, short, default_value = "runs/experiment")]
        out: PathBuf,
        #[arg(long)]
        verbose: bool,
    },
    /// Continue an interrupted run from the checkpoint in its output directory.
    Resume {
        dir: PathBuf,
        /// Override the backend stored in the checkpoint.
        #[arg(long)]
        backend: Option<BackendKind>,
    },
    /// Recompute per-round metrics from a beliefs CSV and an edge list.
    Metrics {
        #[arg(long)]
        beliefs: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        epsilon: f64,
        /// Write CSV here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Write the interaction graph of a config as an edge list.
    ExportGraph {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Command-line overrides, applied on top of `--config` (or the defaults).
#[derive(Args, Default)]
struct ConfigArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "n-rounds", visible_alias = "rounds")]
    n_rounds: Option<u32>,
    #[arg(long = "n-agents", visible_alias = "agents")]
    n_agents: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long = "fatigue-b")]
    fatigue_b: Option<f64>,
    #[arg(long = "decay-lambda")]
    decay_lambda: Option<f64>,
    #[arg(long = "gen-temperature")]
    gen_temperature: Option<f64>,
    #[arg(long)]
    mechanism: Option<Mechanism>,
    #[arg(long)]
    backend: Option<BackendKind>,
    /// Number of mutually unrelated topics.
    #[arg(long, conflicts_with = "correlation")]
    topics: Option<usize>,
    /// Main topic plus one related topic of this kind (or `single-only`).
    #[arg(long)]
    correlation: Option<CorrelationKind>,
    /// Attraction rate of the numeric backend.
    #[arg(long)]
    step: Option<f64>,
    #[arg(long = "no-decay")]
    no_decay: bool,
    #[arg(long = "no-topic-choose")]
    no_topic_choose: bool,
    #[arg(long = "no-interaction-filter")]
    no_interaction_filter: bool,
    #[arg(long = "max-in-flight")]
    max_in_flight: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<SimulationConfig> {
        let mut c = match &self.config {
            Some(p) => SimulationConfig::load(p)?,
            None => SimulationConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => { $( if let Some(v) = self.$field { c.$field = v; } )* };
        }
        set!(seed, n_rounds, n_agents, epsilon, fatigue_b, decay_lambda, gen_temperature, mechanism, backend);
        if let Some(k) = self.topics {
            c.topics = uncorrelated_topics(k);
        }
        if let Some(kind) = self.correlation {
            c.topics = correlated_topics(kind);
        }
        if let Some(s) = self.step {
            c.numeric.step = s;
        }
        if let Some(n) = self.max_in_flight {
            c.llm.max_in_flight = n;
        }
        c.ablations.no_decay |= self.no_decay;
        c.ablations.no_topic_choose |= self.no_topic_choose;
        c.ablations.no_interaction_filter |= self.no_interaction_filter;
        c.validate()?;
        Ok(c)
    }
}

fn parse_seeds(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = spec.split_once("..=") {
        (a.trim().parse()?..=b.trim().parse()?).collect()
    } else if let Some((a, b)) = spec.split_once("..") {
        (a.trim().parse()?..b.trim().parse()?).collect()
    } else {
        spec.split(',')
            .map(|s| s.trim().parse::<u64>())
            .collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        bail!("seed range `{spec}` is empty");
    }
    Ok(seeds)
}

fn backend_for(config: &SimulationConfig) -> Result<OpinionBackend, Error> {
    OpinionBackend::from_config(config).map_err(|source| Error::Backend {
        round: 0,
        source,
        checkpoint: None,
    })
}

fn report(sim: &Simulation) {
    let last = sim.latest();
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
    println!(
        "round {}: NCI {}  ECI {}  P {:.4}  GD {:.4}  Mean-NCI {}",
        last.round,
        fmt(last.mean.nci),
        fmt(last.mean.eci),
        last.mean.polarization,
        last.mean.global_disagreement,
        fmt(last.mean.mean_nci)
    );
    if let Some(a) = sim.artifacts() {
        println!("artifacts in {}", a.dir.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { cfg, out, verbose } => {
            let config = cfg.resolve()?;
            let backend = backend_for(&config)?;
            let mut sim = Simulation::new(config, backend)?.with_artifacts(&out, verbose)?;
            sim.run()?;
            report(&sim);
        }
        Command::Experiment {
            preset,
            cfg,
            seeds,
            out,
            verbose,
        } => {
            let base = cfg.resolve()?;
            let seeds = match seeds {
                Some(s) => parse_seeds(&s).map_err(|e| Error::Config(format!("--seeds: {e}")))?,
                None => vec![base.seed],
            };
            let preset = ExperimentPreset::new(preset);
            let report = run_experiment(&preset, &base, &seeds, Some(&out), verbose, &|c| {
                OpinionBackend::from_config(c)
            })?;
            if let Some(p) = &report.summary_path {
                print!("{}", std::fs::read_to_string(p)?);
            }
            if report.failures() > 0 {
                bail!("{} of {} runs failed", report.failures(), report.results.len());
            }
        }
        Command::Resume { dir, backend } => {
            let cp = topicsim::runner::Checkpoint::load(&dir.join("checkpoint.json"))?;
            let mut config = cp.config;
            if let Some(b) = backend {
                config.backend = b;
            }
            let mut sim = Simulation::resume(&dir, backend_for(&config)?)?;
            sim.run()?;
            report(&sim);
        }
        Command::Metrics {
            beliefs,
            graph,
            epsilon,
            out,
        } => {
            let table = read_beliefs_csv(&beliefs)?;
            let graph = SocialGraph::from_edge_list(&read(&graph)?)?;
            let snaps = recompute_metrics(&table, &graph, epsilon)?;
            let mut csv = String::from("round,topic,nci,eci,polarization,global_disagreement,mean_nci\n");
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            for s in &snaps {
                let rows = s.per_topic.iter().enumerate().map(|(t, m)| (t.to_string(), m));
                for (label, m) in rows.chain(std::iter::once(("mean".to_string(), &s.mean))) {
                    csv.push_str(&format!(
                        "{},{label},{},{},{},{},{}\n",
                        s.round,
                        opt(m.nci),
                        opt(m.eci),
                        m.polarization,
                        m.global_disagreement,
                        opt(m.mean_nci)
                    ));
                }
            }
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::ExportGraph { cfg, out } => {
            let config = cfg.resolve()?;
            let graph = build_graph(&config)?;
            let text = graph.to_edge_list(&format!(
                "seed={}\nattachment_m={}",
                config.seed, config.network.attachment_m
            ));
            match out {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) => 2,
                Error::Backend { .. } => 3,
                Error::Checkpoint(_) => 4,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if let Some(Error::Backend {
                checkpoint: Some(p), ..
            }) = e.downcast_ref::<Error>()
            {
                eprintln!("checkpoint written to {}; continue with `topicsim resume`", p.display());
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
