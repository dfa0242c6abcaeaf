//! Topic competition: group heat, per-agent fatigue, and one recommended topic per round.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::llm::{
    prompts, BackendError, OpinionBackend, PromptInputs, PromptPurpose, RecoInputs, Schema,
    Structured, Transcript,
};
use crate::rng::SimRng;
use crate::TopicId;

/// Relative frequency of each topic across all histories; all zeros when there is no history.
pub fn compute_heat<'a, I>(histories: I, n_topics: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a [TopicId]>,
{
    let mut counts = vec![0usize; n_topics];
    let mut total = 0usize;
    for h in histories {
        for &t in h {
            counts[t] += 1;
            total += 1;
        }
    }
    if total == 0 {
        return vec![0.0; n_topics];
    }
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

/// Topic selection rate of one agent. Zero everywhere before the first interaction.
pub fn compute_tsr(history: &[TopicId], n_topics: usize) -> Vec<f64> {
    compute_heat(std::iter::once(history), n_topics)
}

/// Normalized exponential fatigue: 0 at `tsr = 0`, 1 at `tsr = 1`, steeper for larger `b`.
pub fn compute_fatigue(tsr: f64, b: f64) -> f64 {
    (b * tsr).exp_m1() / b.exp_m1()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicStats {
    pub heat: Vec<f64>,
    /// `tsr[agent][topic]`
    pub tsr: Vec<Vec<f64>>,
    /// `fatigue[agent][topic]`
    pub fatigue: Vec<Vec<f64>>,
}

impl TopicStats {
    pub fn compute(agents: &[AgentState], n_topics: usize, b: f64) -> Self {
        let heat = compute_heat(agents.iter().map(|a| a.topic_history.as_slice()), n_topics);
        let tsr: Vec<Vec<f64>> = agents
            .iter()
            .map(|a| compute_tsr(&a.topic_history, n_topics))
            .collect();
        let fatigue = tsr
            .iter()
            .map(|row| row.iter().map(|&r| compute_fatigue(r, b)).collect())
            .collect();
        TopicStats { heat, tsr, fatigue }
    }

    pub fn mean_fatigue(&self, topic: TopicId) -> f64 {
        if self.fatigue.is_empty() {
            return 0.0;
        }
        self.fatigue.iter().map(|row| row[topic]).sum::<f64>() / self.fatigue.len() as f64
    }
}

/// Blend of group heat and individual freshness used by the numeric recommender.
pub fn topic_scores(heat: &[f64], fatigue: &[f64], heat_weight: f64) -> Vec<f64> {
    heat.iter()
        .zip(fatigue)
        .map(|(&h, &f)| heat_weight * h + (1.0 - heat_weight) * (1.0 - f))
        .collect()
}

/// Index of the best score. Ties go to the lowest id unless `tie_draw` (a uniform value in
/// [0, 1)) is given, in which case it picks among the tied topics.
pub fn argmax_topic(scores: &[f64], tie_draw: Option<f64>) -> TopicId {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<TopicId> = scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == best)
        .map(|(i, _)| i)
        .collect();
    match tie_draw {
        Some(u) if tied.len() > 1 => {
            let idx = ((u * tied.len() as f64) as usize).min(tied.len() - 1);
            tied[idx]
        }
        _ => tied[0],
    }
}

/// Closed-form recommendation from the round's statistics.
pub fn numeric_recommend(
    heat: &[f64],
    fatigue: &[f64],
    heat_weight: f64,
    tie_draw: Option<f64>,
) -> TopicId {
    argmax_topic(&topic_scores(heat, fatigue, heat_weight), tie_draw)
}

/// Uniform topic choice, used when topic recommendation is ablated.
pub fn uniform_topic(rng: &mut SimRng, n_topics: usize) -> TopicId {
    rng.random_range(0..n_topics)
}

/// Recommends one topic through a prompt-driven backend (stub or endpoint).
///
/// A reply naming an unknown topic is re-asked once; a second bad reply is an error.
pub fn recommend_topic(
    inputs: RecoInputs,
    backend: &OpinionBackend,
    round: u32,
    log: &mut Transcript,
) -> Result<TopicId, BackendError> {
    if inputs.topics.len() == 1 {
        return Ok(0);
    }
    let agent = inputs.agent.persona.agent_id;
    let text = prompts::topic_recommendation(&inputs);
    let schema = Schema::TopicChoice {
        labels: inputs.topics.iter().map(|t| t.label.clone()).collect(),
    };
    let reply = backend.ask(
        PromptPurpose::TopicReco,
        agent,
        round,
        text,
        &PromptInputs::TopicReco(inputs),
        &schema,
        log,
    )?;
    match reply {
        Structured::Topic(t) => Ok(t),
        other => Err(BackendError::unexpected(PromptPurpose::TopicReco, &other)),
    }
}
