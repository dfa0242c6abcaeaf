//! Run configuration.
//!
//! [`SimulationConfig`] is read from and echoed to TOML. The keys use the field names below;
//! the main parameters also accept long-form aliases (`number_of_agents`, `running_rounds`,
//! `fatigue_sensitivity`, ...).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::TopicId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Topic {
    pub id: TopicId,
    pub label: String,
    /// What +2 and -2 mean for this topic; quoted in prompts.
    pub stance_frame: String,
    /// Relation to the main topic (topic 0). Omitted for the main topic itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<CorrelationSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationKind {
    SingleOnly,
    StrongPositive,
    WeakPositive,
    None,
    WeakNegative,
    StrongNegative,
}

impl CorrelationKind {
    pub const ALL: [CorrelationKind; 6] = [
        CorrelationKind::SingleOnly,
        CorrelationKind::StrongPositive,
        CorrelationKind::WeakPositive,
        CorrelationKind::None,
        CorrelationKind::WeakNegative,
        CorrelationKind::StrongNegative,
    ];

    pub fn default_coupling(self) -> f64 {
        match self {
            CorrelationKind::SingleOnly | CorrelationKind::None => 0.0,
            CorrelationKind::StrongPositive => 0.8,
            CorrelationKind::WeakPositive => 0.3,
            CorrelationKind::WeakNegative => -0.3,
            CorrelationKind::StrongNegative => -0.8,
        }
    }

    pub fn default_phrase(self) -> &'static str {
        match self {
            CorrelationKind::SingleOnly => "This is the only topic under discussion.",
            CorrelationKind::StrongPositive => {
                "This topic is highly aligned with the main topic in values and positions."
            }
            CorrelationKind::WeakPositive => {
                "This topic shows some indirect support for the main topic's values and positions."
            }
            CorrelationKind::None => {
                "This topic has no meaningful connection to the main topic in beliefs or emotions."
            }
            CorrelationKind::WeakNegative => {
                "This topic differs slightly or indirectly from the main topic in values and positions."
            }
            CorrelationKind::StrongNegative => {
                "This topic is clearly opposed to the main topic in values and positions."
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CorrelationKind::SingleOnly => "single-only",
            CorrelationKind::StrongPositive => "strong-positive",
            CorrelationKind::WeakPositive => "weak-positive",
            CorrelationKind::None => "none",
            CorrelationKind::WeakNegative => "weak-negative",
            CorrelationKind::StrongNegative => "strong-negative",
        }
    }
}

impl std::str::FromStr for CorrelationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CorrelationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown correlation `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelationSpec {
    pub kind: CorrelationKind,
    /// Cross-topic coupling used by the numeric backend, in [-1, 1].
    pub coupling: f64,
    pub prompt_phrase: String,
}

impl CorrelationSpec {
    pub fn of(kind: CorrelationKind) -> Self {
        CorrelationSpec {
            kind,
            coupling: kind.default_coupling(),
            prompt_phrase: kind.default_phrase().to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mechanism {
    /// Bounded-confidence filter on mean belief.
    HkMean,
    /// Structured-prompt matcher, one backend call per candidate neighbor.
    PromptMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Numeric,
    LlmEndpoint,
    Stub,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "numeric" => Ok(BackendKind::Numeric),
            "llm-endpoint" | "llm" => Ok(BackendKind::LlmEndpoint),
            "stub" => Ok(BackendKind::Stub),
            other => Err(Error::config(format!("unknown backend `{other}`"))),
        }
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hk-mean" => Ok(Mechanism::HkMean),
            "prompt-match" => Ok(Mechanism::PromptMatch),
            other => Err(Error::config(format!("unknown mechanism `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    pub no_decay: bool,
    pub no_topic_choose: bool,
    pub no_interaction_filter: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Edges added per new node during preferential attachment.
    pub attachment_m: usize,
    pub edge_weight: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            attachment_m: 2,
            edge_weight: 1.0,
        }
    }
}

/// Parameters of the closed-form backend (and of the stub, which wraps it).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericConfig {
    /// Attraction rate toward the partner on the interacted topic, in (0, 1].
    pub step: f64,
    /// Blend between topic heat and freshness (1 - fatigue) when scoring topics.
    pub heat_weight: f64,
}

impl Default for NumericConfig {
    fn default() -> Self {
        NumericConfig {
            step: 0.3,
            heat_weight: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryConfig {
    pub capacity: usize,
    /// Per-round salience multiplier for long-term records, in (0, 1].
    pub retention: f64,
    /// Rough word budget for long-term memory rendered into a prompt.
    pub prompt_token_budget: usize,
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            capacity: 30,
            retention: 0.95,
            prompt_token_budget: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmConfig {
    /// Falls back to `TOPICSIM_LLM_MODEL` when empty.
    pub model: String,
    pub max_retries: u32,
    pub timeout_secs: f64,
    pub backoff_base_ms: u64,
    pub max_in_flight: usize,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            model: String::new(),
            max_retries: 3,
            timeout_secs: 60.0,
            backoff_base_ms: 250,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(alias = "number_of_agents")]
    pub n_agents: usize,
    #[serde(alias = "running_rounds")]
    pub n_rounds: u32,
    #[serde(alias = "age_of_agents")]
    pub age_range: [u32; 2],
    /// Bounded-confidence threshold; also the NCI similarity threshold.
    #[serde(
        alias = "belief_value_similarity_threshold",
        alias = "tolerance_thresholds_for_neighbor_selection"
    )]
    pub epsilon: f64,
    #[serde(alias = "fatigue_sensitivity")]
    pub fatigue_b: f64,
    #[serde(alias = "decay_factor")]
    pub decay_lambda: f64,
    pub seed: u64,
    pub gen_temperature: f64,
    pub mechanism: Mechanism,
    pub backend: BackendKind,
    pub ablations: Ablations,
    #[serde(alias = "network_infrastructure")]
    pub network: NetworkConfig,
    pub numeric: NumericConfig,
    pub memory: MemoryConfig,
    pub llm: LlmConfig,
    pub topics: Vec<Topic>,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_agents: 50,
            n_rounds: 30,
            age_range: [18, 64],
            epsilon: 0.1,
            fatigue_b: 5.0,
            decay_lambda: 0.01,
            seed: 50,
            gen_temperature: 0.5,
            mechanism: Mechanism::HkMean,
            backend: BackendKind::Numeric,
            ablations: Ablations::default(),
            network: NetworkConfig::default(),
            numeric: NumericConfig::default(),
            memory: MemoryConfig::default(),
            llm: LlmConfig::default(),
            topics: uncorrelated_topics(3),
        }
    }
}

impl SimulationConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimulationConfig =
            toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn n_topics(&self) -> usize {
        self.topics.len()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_agents == 0 {
            return fail("n_agents must be at least 1".into());
        }
        if self.age_range[0] > self.age_range[1] {
            return fail(format!("age_range {:?} is empty", self.age_range));
        }
        if !(self.epsilon >= 0.0) {
            return fail(format!("epsilon must be >= 0, got {}", self.epsilon));
        }
        if !(self.fatigue_b > 0.0) || !self.fatigue_b.is_finite() {
            return fail(format!("fatigue_b must be > 0, got {}", self.fatigue_b));
        }
        if !(self.decay_lambda >= 0.0) || !self.decay_lambda.is_finite() {
            return fail(format!("decay_lambda must be >= 0, got {}", self.decay_lambda));
        }
        if !(self.gen_temperature >= 0.0) {
            return fail(format!("gen_temperature must be >= 0, got {}", self.gen_temperature));
        }
        if self.network.attachment_m == 0 {
            return fail("network.attachment_m must be at least 1".into());
        }
        if !(self.network.edge_weight > 0.0) {
            return fail("network.edge_weight must be positive".into());
        }
        if !(self.numeric.step > 0.0 && self.numeric.step <= 1.0) {
            return fail(format!("numeric.step must be in (0, 1], got {}", self.numeric.step));
        }
        if !(0.0..=1.0).contains(&self.numeric.heat_weight) {
            return fail("numeric.heat_weight must be in [0, 1]".into());
        }
        if self.memory.capacity == 0 {
            return fail("memory.capacity must be at least 1".into());
        }
        if !(self.memory.retention > 0.0 && self.memory.retention <= 1.0) {
            return fail("memory.retention must be in (0, 1]".into());
        }
        if !(self.llm.timeout_secs > 0.0) {
            return fail("llm.timeout_secs must be positive".into());
        }
        if self.topics.is_empty() {
            return fail("at least one topic is required".into());
        }
        let k = self.topics.len();
        for (idx, topic) in self.topics.iter().enumerate() {
            if topic.id != idx {
                return fail(format!("topic ids must be dense 0..{k}; found {} at position {idx}", topic.id));
            }
            if topic.label.trim().is_empty() {
                return fail(format!("topic {idx} has an empty label"));
            }
            match (&topic.correlation, idx) {
                (None, 0) => {}
                (Some(c), 0) if c.kind == CorrelationKind::SingleOnly && k == 1 => {}
                (Some(_), 0) => {
                    return fail("the main topic may only carry a single-only correlation, and only when it is the sole topic".into())
                }
                (None, _) => return fail(format!("topic {idx} needs a correlation to the main topic")),
                (Some(c), _) => {
                    if c.kind == CorrelationKind::SingleOnly {
                        return fail("single-only correlation requires exactly one topic".into());
                    }
                    if !(-1.0..=1.0).contains(&c.coupling) {
                        return fail(format!("topic {idx} coupling {} outside [-1, 1]", c.coupling));
                    }
                }
            }
        }
        Ok(())
    }

    /// Coupling through which movement on topic `from` spills onto topic `to`.
    ///
    /// Relations are declared against the main topic; two related topics couple through it
    /// (product of their couplings).
    pub fn coupling(&self, from: TopicId, to: TopicId) -> f64 {
        if from == to {
            return 1.0;
        }
        let rho = |t: TopicId| {
            self.topics[t]
                .correlation
                .as_ref()
                .map_or(0.0, |c| c.coupling)
        };
        match (from, to) {
            (0, m) => rho(m),
            (k, 0) => rho(k),
            (k, m) => rho(k) * rho(m),
        }
    }

    /// Scenario label for reporting: the correlation of the first related topic.
    pub fn scenario_kind(&self) -> CorrelationKind {
        if self.topics.len() == 1 {
            return CorrelationKind::SingleOnly;
        }
        self.topics[1]
            .correlation
            .as_ref()
            .map_or(CorrelationKind::None, |c| c.kind)
    }
}

pub fn main_topic() -> Topic {
    Topic {
        id: 0,
        label: "Remote work as the default".into(),
        stance_frame: "+2: office jobs should be remote by default; -2: employees belong in the office full time".into(),
        correlation: None,
    }
}

const UNRELATED: [(&str, &str); 4] = [
    (
        "Public funding for space exploration",
        "+2: governments should greatly expand space budgets; -2: space budgets should be cut to zero",
    ),
    (
        "Pineapple on pizza",
        "+2: pineapple belongs on pizza; -2: pineapple on pizza is unacceptable",
    ),
    (
        "Daylight saving time",
        "+2: keep changing the clocks twice a year; -2: abolish clock changes entirely",
    ),
    (
        "Competitive video gaming as a sport",
        "+2: esports deserve full recognition as sport; -2: video games are not sport at all",
    ),
];

/// Main topic plus `k - 1` topics unrelated to it.
pub fn uncorrelated_topics(k: usize) -> Vec<Topic> {
    let mut topics = vec![main_topic()];
    for i in 1..k {
        let (label, frame) = UNRELATED[(i - 1) % UNRELATED.len()];
        let label = if i > UNRELATED.len() {
            format!("{label} ({i})")
        } else {
            label.to_string()
        };
        topics.push(Topic {
            id: i,
            label,
            stance_frame: frame.into(),
            correlation: Some(CorrelationSpec::of(CorrelationKind::None)),
        });
    }
    topics
}

/// Topic set for one correlation scenario: the main topic alone for `single-only`, otherwise
/// the main topic plus one related topic of the given kind.
pub fn correlated_topics(kind: CorrelationKind) -> Vec<Topic> {
    let (label, frame) = match kind {
        CorrelationKind::SingleOnly => {
            let mut main = main_topic();
            main.correlation = Some(CorrelationSpec::of(kind));
            return vec![main];
        }
        CorrelationKind::StrongPositive => (
            "Employer-funded home offices",
            "+2: employers must pay for home-office equipment; -2: home offices are the worker's own cost",
        ),
        CorrelationKind::WeakPositive => (
            "Four-day work week",
            "+2: a four-day week should be standard; -2: the five-day week should stay",
        ),
        CorrelationKind::None => UNRELATED[0],
        CorrelationKind::WeakNegative => (
            "Subsidies for downtown commercial rents",
            "+2: cities should subsidize downtown office rents; -2: no public money for office rents",
        ),
        CorrelationKind::StrongNegative => (
            "Mandatory return-to-office policies",
            "+2: employers should require full-time office attendance; -2: attendance mandates should be banned",
        ),
    };
    vec![
        main_topic(),
        Topic {
            id: 1,
            label: label.into(),
            stance_frame: frame.into(),
            correlation: Some(CorrelationSpec::of(kind)),
        },
    ]
}
