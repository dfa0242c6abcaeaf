//! Backend abstraction.
//!
//! A backend turns a rendered prompt plus the structured inputs behind it into raw reply
//! text. Remote models only see the text; the [`stub::StubBackend`] only looks at the
//! structured inputs, so its behavior does not depend on prompt wording. Callers parse
//! replies with [`parse::parse_structured`] through [`OpinionBackend::ask`], which applies
//! the one-re-ask policy and records every call in a [`Transcript`].

pub mod client;
pub mod parse;
pub mod prompts;
pub mod stub;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{BeliefVector, PersonaProfile};
use crate::beliefs::Couplings;
use crate::config::{BackendKind, SimulationConfig, Topic};
use crate::memory::MemoryRecord;
use crate::{AgentId, TopicId};

pub use client::ChatClient;
pub use parse::{parse_structured, ParseError, Schema, Structured};
pub use stub::StubBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptPurpose {
    NeighborMatch,
    TopicReco,
    BeliefUpdate,
    MemoryConsolidate,
}

impl fmt::Display for PromptPurpose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptPurpose::NeighborMatch => "neighbor-match",
            PromptPurpose::TopicReco => "topic-reco",
            PromptPurpose::BeliefUpdate => "belief-update",
            PromptPurpose::MemoryConsolidate => "memory-consolidate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub purpose: PromptPurpose,
    pub rendered_text: String,
    pub agent: AgentId,
    pub round: u32,
    /// 0 for the first ask, 1 for the re-ask.
    pub attempt: u32,
}

/// What an agent looks like to a prompt: profile, current beliefs, memory excerpt.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentView {
    pub persona: PersonaProfile,
    pub beliefs: BeliefVector,
    pub memory: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MatchInputs {
    pub agent: AgentView,
    pub candidate: AgentView,
    pub epsilon: f64,
    pub topics: Arc<[Topic]>,
}

#[derive(Debug, Clone)]
pub struct RecoInputs {
    pub agent: AgentView,
    pub topics: Arc<[Topic]>,
    pub heat: Vec<f64>,
    pub fatigue: Vec<f64>,
    pub heat_weight: f64,
    /// Uniform draw used to break ties when the agent has no history yet.
    pub tie_draw: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct UpdateInputs {
    pub agent: AgentView,
    pub partner: AgentView,
    pub topic: TopicId,
    pub partner_message: String,
    pub topics: Arc<[Topic]>,
    pub couplings: Couplings,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct ConsolidateInputs {
    pub agent: AgentId,
    pub round: u32,
    pub records: Vec<MemoryRecord>,
    pub topics: Arc<[Topic]>,
}

#[derive(Debug, Clone)]
pub enum PromptInputs {
    NeighborMatch(MatchInputs),
    TopicReco(RecoInputs),
    BeliefUpdate(UpdateInputs),
    Consolidate(ConsolidateInputs),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("request timed out after {after:?}")]
    Timeout { after: Duration },

    #[error("unusable {purpose} reply after re-ask: {detail}")]
    Malformed { purpose: PromptPurpose, detail: String },

    #[error("backend unavailable: {0}")]
    Unavailable(String),
}

impl BackendError {
    pub(crate) fn unexpected(purpose: PromptPurpose, got: &Structured) -> Self {
        BackendError::Malformed {
            purpose,
            detail: format!("unexpected reply shape {got:?}"),
        }
    }
}

/// Something that answers prompts.
pub trait Completion: Send + Sync {
    fn complete(&self, prompt: &PromptRecord, inputs: &PromptInputs) -> Result<String, BackendError>;
}

/// One backend call as written to the prompts log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallLog {
    pub round: u32,
    pub agent: AgentId,
    pub purpose: PromptPurpose,
    pub attempt: u32,
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub type Transcript = Vec<CallLog>;

#[derive(Clone)]
enum Engine {
    Numeric,
    Complete(Arc<dyn Completion>),
}

#[derive(Clone)]
pub struct OpinionBackend {
    kind: BackendKind,
    engine: Engine,
    max_in_flight: usize,
}

impl fmt::Debug for OpinionBackend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OpinionBackend")
            .field("kind", &self.kind)
            .field("max_in_flight", &self.max_in_flight)
            .finish()
    }
}

const REASK_REMINDER: &str = "\n\nYour previous reply could not be used";

impl OpinionBackend {
    /// Closed-form rules called directly, without prompts.
    pub fn numeric() -> Self {
        OpinionBackend {
            kind: BackendKind::Numeric,
            engine: Engine::Numeric,
            max_in_flight: 1,
        }
    }

    /// Deterministic rule-based replies through the full prompt/parse path.
    pub fn stub() -> Self {
        Self::with_completion(BackendKind::Stub, Arc::new(StubBackend))
    }

    /// Any completion source, reported as `kind`.
    pub fn with_completion(kind: BackendKind, completion: Arc<dyn Completion>) -> Self {
        OpinionBackend {
            kind,
            engine: Engine::Complete(completion),
            max_in_flight: 1,
        }
    }

    /// Backend named by `config.backend`. The endpoint backend reads its connection
    /// settings from the environment (see [`ChatClient::from_env`]).
    pub fn from_config(config: &SimulationConfig) -> Result<Self, BackendError> {
        let backend = match config.backend {
            BackendKind::Numeric => Self::numeric(),
            BackendKind::Stub => Self::stub(),
            BackendKind::LlmEndpoint => Self::with_completion(
                BackendKind::LlmEndpoint,
                Arc::new(ChatClient::from_env(config)?),
            ),
        };
        Ok(backend.in_flight(config.llm.max_in_flight))
    }

    pub fn in_flight(mut self, limit: usize) -> Self {
        self.max_in_flight = limit.max(1);
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self.engine, Engine::Numeric)
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    /// Sends one prompt and returns the raw reply, logging the call.
    pub fn complete(
        &self,
        prompt: &PromptRecord,
        inputs: &PromptInputs,
        log: &mut Transcript,
    ) -> Result<String, BackendError> {
        let result = match &self.engine {
            Engine::Numeric => Err(BackendError::Unavailable(
                "the numeric backend does not answer prompts".into(),
            )),
            Engine::Complete(c) => c.complete(prompt, inputs),
        };
        log.push(CallLog {
            round: prompt.round,
            agent: prompt.agent,
            purpose: prompt.purpose,
            attempt: prompt.attempt,
            prompt: prompt.rendered_text.clone(),
            reply: result.as_ref().ok().cloned(),
            error: result.as_ref().err().map(ToString::to_string),
        });
        result
    }

    /// Asks and parses against `schema`. An unparseable reply triggers one re-ask with a
    /// format reminder; a second failure is [`BackendError::Malformed`]. Transport errors
    /// are returned as-is.
    #[allow(clippy::too_many_arguments)]
    pub fn ask(
        &self,
        purpose: PromptPurpose,
        agent: AgentId,
        round: u32,
        text: String,
        inputs: &PromptInputs,
        schema: &Schema,
        log: &mut Transcript,
    ) -> Result<Structured, BackendError> {
        let mut prompt = PromptRecord {
            purpose,
            rendered_text: text,
            agent,
            round,
            attempt: 0,
        };
        let reply = self.complete(&prompt, inputs, log)?;
        let first_err = match parse_structured(&reply, schema) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        log::debug!("agent {agent} round {round}: re-asking {purpose} ({first_err})");
        prompt.attempt = 1;
        prompt.rendered_text.push_str(&format!(
            "{REASK_REMINDER} ({first_err}). Reply with only the JSON object described above."
        ));
        let reply = self.complete(&prompt, inputs, log)?;
        parse_structured(&reply, schema).map_err(|e| BackendError::Malformed {
            purpose,
            detail: e.to_string(),
        })
    }
}
