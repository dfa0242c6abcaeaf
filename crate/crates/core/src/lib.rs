//! Seeded multi-topic opinion dynamics on scale-free social graphs.
//!
//! Agents hold a belief vector over `K` topics, pick interaction partners through a
//! bounded-confidence filter (or a language-model matcher), receive one recommended topic
//! per round from a heat/fatigue competition, remember interactions in a two-layer memory,
//! and contract their beliefs through exponential decay. Every stage can run against a
//! closed-form numeric backend, a deterministic stub that exercises the full prompt/parse
//! pipeline, or a chat-completion endpoint.
//!
//! The round loop lives in [`runner`]; the echo-chamber metrics in [`metrics`].

pub mod agent;
pub mod beliefs;
pub mod config;
pub mod error;
pub mod interaction;
pub mod llm;
pub mod memory;
pub mod metrics;
pub mod network;
pub mod rng;
pub mod runner;
pub mod topics;
mod util;

pub use agent::{init_population, mean_belief, AgentState, BeliefVector, PersonaProfile};
pub use config::{Ablations, CorrelationKind, CorrelationSpec, Mechanism, SimulationConfig, Topic};
pub use error::{Error, Result};
pub use network::SocialGraph;

/// Index of a topic inside the configured topic set (dense, starting at 0).
pub type TopicId = usize;

/// Index of an agent; doubles as its node id in the social graph.
pub type AgentId = usize;

/// Lower bound of every belief component.
pub const BELIEF_MIN: f64 = -2.0;
/// Upper bound of every belief component.
pub const BELIEF_MAX: f64 = 2.0;
