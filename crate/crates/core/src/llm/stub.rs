//! Rule-based backend that answers from structured inputs only.
//!
//! - neighbor match: yes iff the mean-belief gap is within epsilon (same rule as the
//!   bounded-confidence filter)
//! - topic recommendation: the numeric heat/fatigue scorer
//! - belief update: the numeric update rule, including spillover onto related topics
//! - consolidation: rule-based concatenation

use serde_json::json;

use super::{BackendError, Completion, PromptInputs, PromptRecord};
use crate::beliefs::numeric_update;
use crate::memory;
use crate::topics::numeric_recommend;

#[derive(Debug, Clone, Copy, Default)]
pub struct StubBackend;

impl StubBackend {
    pub fn reply(inputs: &PromptInputs) -> String {
        match inputs {
            PromptInputs::NeighborMatch(m) => {
                let gap = (m.agent.beliefs.mean() - m.candidate.beliefs.mean()).abs();
                let accept = gap <= m.epsilon;
                let reason = format!(
                    "mean belief gap {gap:.4} {} tolerance {}",
                    if accept { "within" } else { "beyond" },
                    m.epsilon
                );
                json!({"decision": if accept { "yes" } else { "no" }, "reason": reason}).to_string()
            }
            PromptInputs::TopicReco(r) => {
                let t = numeric_recommend(&r.heat, &r.fatigue, r.heat_weight, r.tie_draw);
                json!({"topic": format!("T{t}"), "reason": "highest heat/freshness score"}).to_string()
            }
            PromptInputs::BeliefUpdate(u) => {
                let new = numeric_update(&u.agent.beliefs, &u.partner.beliefs, u.topic, &u.couplings, u.step);
                let related: serde_json::Map<String, serde_json::Value> = (0..new.len())
                    .filter(|&m| m != u.topic && new.get(m) != u.agent.beliefs.get(m))
                    .map(|m| (format!("T{m}"), json!(new.get(m))))
                    .collect();
                json!({
                    "new_belief": new.get(u.topic),
                    "reason": format!("moved {:.0}% toward user {}", u.step * 100.0, u.partner.persona.agent_id),
                    "related": related,
                })
                .to_string()
            }
            PromptInputs::Consolidate(c) => {
                json!({"summary": memory::concatenate(&c.records)}).to_string()
            }
        }
    }
}

impl Completion for StubBackend {
    fn complete(&self, _prompt: &PromptRecord, inputs: &PromptInputs) -> Result<String, BackendError> {
        Ok(Self::reply(inputs))
    }
}
