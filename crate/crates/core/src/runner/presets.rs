//! Named experiments: sets of scenarios that share a base config and seed and differ only in
//! the fields each scenario overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{RunArtifacts, RunSummary, Simulation};
use crate::config::{correlated_topics, uncorrelated_topics, CorrelationKind, Mechanism, SimulationConfig};
use crate::error::{Error, Result};
use crate::llm::{BackendError, OpinionBackend};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PresetName {
    SingleTopic,
    MultiTopicUncorrelated,
    CorrelationSweep,
    AblationSuite,
}

impl PresetName {
    pub const ALL: [PresetName; 4] = [
        PresetName::SingleTopic,
        PresetName::MultiTopicUncorrelated,
        PresetName::CorrelationSweep,
        PresetName::AblationSuite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::SingleTopic => "single-topic",
            PresetName::MultiTopicUncorrelated => "multi-topic-uncorrelated",
            PresetName::CorrelationSweep => "correlation-sweep",
            PresetName::AblationSuite => "ablation-suite",
        }
    }
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PresetName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown preset `{s}`")))
    }
}

/// One run of an experiment: a name and the config fields it overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub overrides: toml::Table,
}

fn merge(base: &mut toml::Table, overrides: &toml::Table) {
    for (key, value) in overrides {
        match (base.get_mut(key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

impl Scenario {
    fn new(name: impl Into<String>) -> Self {
        Scenario {
            name: name.into(),
            overrides: toml::Table::new(),
        }
    }

    fn set(mut self, key: &str, value: impl Serialize) -> Self {
        let value = toml::Value::try_from(value).expect("override values are plain data");
        self.overrides.insert(key.to_string(), value);
        self
    }

    fn ablations(self, no_decay: bool, no_topic_choose: bool, no_interaction_filter: bool) -> Self {
        let mut t = toml::Table::new();
        t.insert("no_decay".into(), no_decay.into());
        t.insert("no_topic_choose".into(), no_topic_choose.into());
        t.insert("no_interaction_filter".into(), no_interaction_filter.into());
        self.set("ablations", t)
    }

    /// The base config with this scenario's overrides applied, validated.
    pub fn apply(&self, base: &SimulationConfig) -> Result<SimulationConfig> {
        let mut table: toml::Table = toml::from_str(&base.to_toml_string())
            .map_err(|e| Error::config(format!("base config does not round-trip: {e}")))?;
        merge(&mut table, &self.overrides);
        let text = toml::to_string(&table).map_err(|e| Error::config(e.to_string()))?;
        SimulationConfig::from_toml_str(&text)
            .map_err(|e| Error::config(format!("scenario `{}`: {e}", self.name)))
    }
}

/// The comparison baseline without multi-topic machinery: one topic, every mechanism inert.
fn single_topic() -> Scenario {
    Scenario::new("single-topic")
        .set("topics", uncorrelated_topics(1))
        .ablations(true, true, true)
}

fn multi_topic(name: &str) -> Scenario {
    Scenario::new(name)
        .set("topics", uncorrelated_topics(3))
        .set("mechanism", Mechanism::HkMean)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub scenarios: Vec<Scenario>,
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        let scenarios = match name {
            PresetName::SingleTopic => vec![single_topic()],
            PresetName::MultiTopicUncorrelated => {
                vec![multi_topic("multi-topic-uncorrelated").ablations(false, false, false)]
            }
            PresetName::CorrelationSweep => CorrelationKind::ALL
                .into_iter()
                .map(|kind| {
                    Scenario::new(kind.name())
                        .set("topics", correlated_topics(kind))
                        .ablations(false, false, false)
                })
                .collect(),
            PresetName::AblationSuite => vec![
                multi_topic("full").ablations(false, false, false),
                multi_topic("prompt-choose")
                    .set("mechanism", Mechanism::PromptMatch)
                    .ablations(false, false, false),
                multi_topic("w/o decay").ablations(true, false, false),
                multi_topic("w/o topic-choose").ablations(false, true, false),
                multi_topic("w/o all").ablations(true, true, true),
                single_topic(),
            ],
        };
        ExperimentPreset { name, scenarios }
    }

    /// Every scenario's full config.
    pub fn expand(&self, base: &SimulationConfig) -> Result<Vec<(String, SimulationConfig)>> {
        self.scenarios
            .iter()
            .map(|s| Ok((s.name.clone(), s.apply(base)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioOutcome {
    Completed(RunSummary),
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub scenario: String,
    pub seed: u64,
    pub config: SimulationConfig,
    pub artifacts: Option<RunArtifacts>,
    pub outcome: ScenarioOutcome,
}

impl ScenarioResult {
    pub fn summary(&self) -> Option<&RunSummary> {
        match &self.outcome {
            ScenarioOutcome::Completed(s) => Some(s),
            ScenarioOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub preset: PresetName,
    pub results: Vec<ScenarioResult>,
    pub summary_path: Option<PathBuf>,
}

impl ExperimentReport {
    pub fn completed<'a>(&'a self, scenario: &'a str) -> impl Iterator<Item = &'a RunSummary> + 'a {
        self.results
            .iter()
            .filter(move |r| r.scenario == scenario)
            .filter_map(ScenarioResult::summary)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| r.summary().is_none()).count()
    }
}

fn dir_name(scenario: &str) -> String {
    scenario
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Runs every scenario of `preset` for every seed. A failing scenario is recorded and the
/// rest still run. With `out_dir`, each run writes its artifacts to
/// `<out_dir>/<scenario>[/seed-<seed>]` and a `summary.csv` lands in `out_dir`.
pub fn run_experiment(
    preset: &ExperimentPreset,
    base: &SimulationConfig,
    seeds: &[u64],
    out_dir: Option<&Path>,
    with_prompts: bool,
    make_backend: &dyn Fn(&SimulationConfig) -> std::result::Result<OpinionBackend, BackendError>,
) -> Result<ExperimentReport> {
    let seeds: Vec<u64> = if seeds.is_empty() { vec![base.seed] } else { seeds.to_vec() };
    let mut results = Vec::new();
    for (name, config) in preset.expand(base)? {
        for &seed in &seeds {
            let config = SimulationConfig { seed, ..config.clone() };
            let dir = out_dir.map(|d| {
                let d = d.join(dir_name(&name));
                if seeds.len() > 1 {
                    d.join(format!("seed-{seed}"))
                } else {
                    d
                }
            });
            let mut artifacts = dir.as_ref().map(|d| RunArtifacts::in_dir(d, with_prompts));
            let outcome = (|| -> Result<RunSummary> {
                let backend = make_backend(&config).map_err(|source| Error::Backend {
                    round: 0,
                    source,
                    checkpoint: None,
                })?;
                let mut sim = Simulation::new(config.clone(), backend)?;
                if let Some(d) = &dir {
                    sim = sim.with_artifacts(d, with_prompts)?;
                }
                sim.run()
            })();
            let outcome = match outcome {
                Ok(summary) => ScenarioOutcome::Completed(summary),
                Err(e) => {
                    log::error!("scenario {name} (seed {seed}) failed: {e}");
                    if dir.as_ref().is_some_and(|d| !d.exists()) {
                        artifacts = None;
                    }
                    ScenarioOutcome::Failed { error: e.to_string() }
                }
            };
            results.push(ScenarioResult {
                scenario: name.clone(),
                seed,
                config,
                artifacts,
                outcome,
            });
        }
    }
    let mut report = ExperimentReport {
        preset: preset.name,
        results,
        summary_path: None,
    };
    if let Some(d) = out_dir {
        std::fs::create_dir_all(d)?;
        let path = d.join("summary.csv");
        std::fs::write(&path, summary_csv(&report)?)?;
        report.summary_path = Some(path);
    }
    Ok(report)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-run rows of ΔP, ΔGD and ΔMean-NCI (final round against round 0, averaged over
/// topics) plus final NCI/ECI; with several seeds, a `mean` row per scenario follows.
pub fn summary_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "scenario", "seed", "status", "delta_polarization", "delta_global_disagreement",
        "delta_mean_nci", "final_nci", "final_eci",
    ])?;
    let mut order: Vec<&str> = Vec::new();
    for r in &report.results {
        if !order.contains(&r.scenario.as_str()) {
            order.push(&r.scenario);
        }
    }
    for name in order {
        let rows: Vec<&ScenarioResult> = report.results.iter().filter(|r| r.scenario == name).collect();
        for r in &rows {
            match &r.outcome {
                ScenarioOutcome::Completed(s) => w.write_record([
                    name.to_string(),
                    r.seed.to_string(),
                    "ok".into(),
                    s.mean_deltas.polarization.to_string(),
                    s.mean_deltas.global_disagreement.to_string(),
                    opt(s.mean_deltas.mean_nci),
                    opt(s.last.mean.nci),
                    opt(s.last.mean.eci),
                ])?,
                ScenarioOutcome::Failed { error } => w.write_record([
                    name.to_string(),
                    r.seed.to_string(),
                    format!("failed: {error}"),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])?,
            }
        }
        let done: Vec<&RunSummary> = rows.iter().filter_map(|r| r.summary()).collect();
        if rows.len() > 1 && !done.is_empty() {
            let n = done.len() as f64;
            let mean = |f: &dyn Fn(&RunSummary) -> f64| done.iter().map(|s| f(s)).sum::<f64>() / n;
            let mean_opt = |f: &dyn Fn(&RunSummary) -> Option<f64>| {
                done.iter().map(|s| f(s)).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
            };
            w.write_record([
                name.to_string(),
                "mean".into(),
                format!("ok {}/{}", done.len(), rows.len()),
                mean(&|s| s.mean_deltas.polarization).to_string(),
                mean(&|s| s.mean_deltas.global_disagreement).to_string(),
                opt(mean_opt(&|s| s.mean_deltas.mean_nci)),
                opt(mean_opt(&|s| s.last.mean.nci)),
                opt(mean_opt(&|s| s.last.mean.eci)),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
