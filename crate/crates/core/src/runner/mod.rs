//! Round loop, run artifacts, checkpoint/resume and experiment presets.

mod artifacts;
mod presets;
mod round;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use artifacts::{read_beliefs_csv, recompute_metrics, BeliefTable, Offsets, RunArtifacts};
pub use presets::{
    run_experiment, summary_csv, ExperimentPreset, ExperimentReport, PresetName, Scenario,
    ScenarioOutcome, ScenarioResult,
};
pub use round::{run_round, Event, RoundFailure, RoundOutcome};

use crate::agent::{init_population, AgentState};
use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::llm::OpinionBackend;
use crate::metrics::{Deltas, MetricsSnapshot};
use crate::network::{generate_scale_free, SocialGraph};
use crate::rng::{self, Stage};
use crate::topics::TopicStats;
use artifacts::{write_atomic, ArtifactWriter};

const CHECKPOINT_FORMAT: u32 = 1;

/// State at the end of a committed round, enough to continue the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: u32,
    pub seed: u64,
    /// Last completed round (0 = initial state).
    pub round: u32,
    pub config: SimulationConfig,
    pub graph: SocialGraph,
    pub agents: Vec<AgentState>,
    pub history: Vec<MetricsSnapshot>,
    pub offsets: Option<Offsets>,
    pub with_prompts: bool,
    /// Why the run stopped, when it stopped on an error.
    pub failure: Option<String>,
}

impl Checkpoint {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        let cp: Checkpoint = serde_json::from_str(&text)
            .map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if cp.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported checkpoint format {}", cp.format)));
        }
        if cp.history.is_empty() || cp.history.last().map(|s| s.round) != Some(cp.round) {
            return Err(Error::Checkpoint("metrics history does not match the checkpoint round".into()));
        }
        if cp.agents.len() != cp.config.n_agents || cp.graph.len() != cp.config.n_agents {
            return Err(Error::Checkpoint("agent count does not match the config".into()));
        }
        cp.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
        Ok(cp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub rounds: u32,
    pub baseline: MetricsSnapshot,
    pub last: MetricsSnapshot,
    pub per_topic_deltas: Vec<Deltas>,
    pub mean_deltas: Deltas,
}

/// Builds the interaction graph of a run from its seed.
pub fn build_graph(config: &SimulationConfig) -> Result<SocialGraph> {
    let mut rng = rng::stream(config.seed, 0, Stage::Graph, 0);
    let n = config.n_agents;
    let m = config.network.attachment_m;
    let mut graph = if n <= m {
        // too small for attachment; a complete graph is the closest thing
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)))
            .collect();
        SocialGraph::from_edges(n, &edges)?
    } else {
        generate_scale_free(n, m, &mut rng)?
    };
    graph.set_uniform_weight(config.network.edge_weight);
    Ok(graph)
}

pub struct Simulation {
    config: SimulationConfig,
    graph: SocialGraph,
    agents: Vec<AgentState>,
    backend: OpinionBackend,
    round: u32,
    history: Vec<MetricsSnapshot>,
    writer: Option<ArtifactWriter>,
    events: Option<Vec<Event>>,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("round", &self.round)
            .field("n_agents", &self.agents.len())
            .field("backend", &self.backend)
            .finish()
    }
}

impl Simulation {
    pub fn new(config: SimulationConfig, backend: OpinionBackend) -> Result<Self> {
        config.validate()?;
        let graph = build_graph(&config)?;
        let agents = init_population(&config);
        let baseline = MetricsSnapshot::compute(0, &agents, &graph, config.epsilon);
        Ok(Simulation {
            config,
            graph,
            agents,
            backend,
            round: 0,
            history: vec![baseline],
            writer: None,
            events: None,
        })
    }

    /// Starts writing artifacts into `dir` (created if missing; existing files are replaced).
    pub fn with_artifacts(mut self, dir: &Path, with_prompts: bool) -> Result<Self> {
        if self.round != 0 {
            return Err(Error::config("artifacts must be attached before the first round"));
        }
        let mut writer = ArtifactWriter::create(
            RunArtifacts::in_dir(dir, with_prompts),
            &self.config,
            &self.graph,
        )?;
        let stats = TopicStats::compute(&self.agents, self.config.n_topics(), self.config.fatigue_b);
        let baseline = &self.history[0];
        writer.write_events(&[Event::Metrics {
            round: 0,
            mean: baseline.mean,
        }])?;
        writer.write_round(&self.agents, baseline, &stats)?;
        let offsets = writer.commit()?;
        self.writer = Some(writer);
        self.write_checkpoint(Some(offsets), None)?;
        Ok(self)
    }

    /// Keeps every event in memory as well (see [`Simulation::events`]).
    pub fn record_events(mut self) -> Self {
        self.events = Some(Vec::new());
        self
    }

    /// Continues a run from the checkpoint in `dir`, truncating its tables to the checkpoint.
    pub fn resume(dir: &Path, backend: OpinionBackend) -> Result<Self> {
        let paths = RunArtifacts::in_dir(dir, false);
        let cp = Checkpoint::load(&paths.checkpoint)?;
        let paths = RunArtifacts::in_dir(dir, cp.with_prompts);
        let offsets = cp
            .offsets
            .ok_or_else(|| Error::Checkpoint("checkpoint carries no artifact offsets".into()))?;
        let writer = ArtifactWriter::reopen(paths, &offsets)?;
        log::info!("resuming {} after round {}", dir.display(), cp.round);
        Ok(Simulation {
            config: cp.config,
            graph: cp.graph,
            agents: cp.agents,
            backend,
            round: cp.round,
            history: cp.history,
            writer: Some(writer),
            events: None,
        })
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    /// Completed rounds.
    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.round >= self.config.n_rounds
    }

    /// Snapshots from round 0 through the last completed round.
    pub fn history(&self) -> &[MetricsSnapshot] {
        &self.history
    }

    pub fn baseline(&self) -> &MetricsSnapshot {
        &self.history[0]
    }

    pub fn latest(&self) -> &MetricsSnapshot {
        self.history.last().expect("history starts with the baseline")
    }

    pub fn events(&self) -> Option<&[Event]> {
        self.events.as_deref()
    }

    pub fn artifacts(&self) -> Option<&RunArtifacts> {
        self.writer.as_ref().map(ArtifactWriter::paths)
    }

    fn write_checkpoint(&self, offsets: Option<Offsets>, failure: Option<String>) -> Result<Option<PathBuf>> {
        let Some(writer) = &self.writer else {
            return Ok(None);
        };
        let cp = Checkpoint {
            format: CHECKPOINT_FORMAT,
            seed: self.config.seed,
            round: self.round,
            config: self.config.clone(),
            graph: self.graph.clone(),
            agents: self.agents.clone(),
            history: self.history.clone(),
            offsets,
            with_prompts: writer.paths().prompts.is_some(),
            failure,
        };
        let path = writer.paths().checkpoint.clone();
        write_atomic(&path, &serde_json::to_vec(&cp)?)?;
        Ok(Some(path))
    }

    /// Runs the next round. On a backend failure the state stays at the previous round, a
    /// checkpoint is left behind (when artifacts are attached) and the error says where.
    pub fn step(&mut self) -> Result<&MetricsSnapshot> {
        let round = self.round + 1;
        match run_round(&mut self.agents, &self.graph, &self.config, &self.backend, round) {
            Ok(outcome) => {
                self.round = round;
                if let Some(w) = &mut self.writer {
                    w.write_prompts(&outcome.transcript)?;
                    w.write_events(&outcome.events)?;
                    w.write_round(&self.agents, &outcome.snapshot, &outcome.stats)?;
                }
                if let Some(ev) = &mut self.events {
                    ev.extend(outcome.events);
                }
                self.history.push(outcome.snapshot);
                if let Some(w) = &mut self.writer {
                    let offsets = w.commit()?;
                    self.write_checkpoint(Some(offsets), None)?;
                }
                Ok(self.latest())
            }
            Err(failure) => {
                log::warn!("round {round} failed: {}", failure.error);
                let mut checkpoint = None;
                if let Some(w) = &mut self.writer {
                    w.write_prompts(&failure.transcript)?;
                    let offsets = w.commit()?;
                    checkpoint = self.write_checkpoint(Some(offsets), Some(failure.error.to_string()))?;
                }
                Err(Error::Backend {
                    round,
                    source: failure.error,
                    checkpoint,
                })
            }
        }
    }

    /// Runs the remaining rounds.
    pub fn run(&mut self) -> Result<RunSummary> {
        while !self.is_finished() {
            self.step()?;
        }
        if let Some(w) = &self.writer {
            w.write_memory(self.config.seed, &self.agents)?;
        }
        self.summary()
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let (per_topic_deltas, mean_deltas) = crate::metrics::deltas(self.latest(), self.baseline())?;
        Ok(RunSummary {
            rounds: self.round,
            baseline: self.baseline().clone(),
            last: self.latest().clone(),
            per_topic_deltas,
            mean_deltas,
        })
    }
}

/// Runs `config` to completion in memory and returns its summary.
pub fn simulate(config: &SimulationConfig, backend: OpinionBackend) -> Result<RunSummary> {
    Simulation::new(config.clone(), backend)?.run()
}
