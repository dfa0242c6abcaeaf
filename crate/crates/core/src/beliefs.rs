//! Belief revision after interactions, and exponential belief decay.

use serde::{Deserialize, Serialize};

use crate::agent::{clamp_belief, AgentState, BeliefVector};
use crate::config::SimulationConfig;
use crate::llm::{
    prompts, BackendError, OpinionBackend, PromptInputs, PromptPurpose, Schema, Structured,
    Transcript, UpdateInputs,
};
use crate::{AgentId, TopicId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefUpdate {
    pub agent: AgentId,
    pub topic: TopicId,
    pub old: f64,
    pub new: f64,
    pub reason: String,
}

/// Outcome of one interaction for one agent: the interacted topic plus any spillover.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefRevision {
    pub primary: BeliefUpdate,
    pub spillover: Vec<BeliefUpdate>,
}

impl BeliefRevision {
    pub fn apply(&self, beliefs: &mut BeliefVector) {
        beliefs.set(self.primary.topic, self.primary.new);
        for u in &self.spillover {
            beliefs.set(u.topic, u.new);
        }
    }

    pub fn updates(&self) -> impl Iterator<Item = &BeliefUpdate> {
        std::iter::once(&self.primary).chain(self.spillover.iter())
    }
}

/// `v * exp(-lambda * |v|)`: contraction toward 0 that bites harder on extreme stances.
pub fn apply_decay(v: f64, lambda: f64) -> f64 {
    v * (-lambda * v.abs()).exp()
}

/// Pairwise cross-topic couplings, `at(from, to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Couplings {
    k: usize,
    values: Vec<f64>,
}

impl Couplings {
    pub fn from_config(config: &SimulationConfig) -> Self {
        let k = config.n_topics();
        let mut values = Vec::with_capacity(k * k);
        for from in 0..k {
            for to in 0..k {
                values.push(config.coupling(from, to));
            }
        }
        Couplings { k, values }
    }

    /// No spillover between any pair of topics.
    pub fn decoupled(k: usize) -> Self {
        let mut values = vec![0.0; k * k];
        for i in 0..k {
            values[i * k + i] = 1.0;
        }
        Couplings { k, values }
    }

    pub fn at(&self, from: TopicId, to: TopicId) -> f64 {
        self.values[from * self.k + to]
    }
}

/// Closed-form belief revision after hearing `partner` on `topic`.
///
/// The interacted topic moves a fraction `step` of the way to the partner. Every other topic
/// `m` moves by `step * |rho| * |gap on topic|` toward the partner's stance on `m` when the
/// coupling `rho` is positive and away from it when negative; attraction never overshoots the
/// partner. All components are clamped to [-2, 2].
pub fn numeric_update(
    own: &BeliefVector,
    partner: &BeliefVector,
    topic: TopicId,
    couplings: &Couplings,
    step: f64,
) -> BeliefVector {
    let mut out = own.clone();
    let gap = partner.get(topic) - own.get(topic);
    out.set(topic, own.get(topic) + step * gap);
    for m in 0..own.len() {
        if m == topic {
            continue;
        }
        let rho = couplings.at(topic, m);
        if rho == 0.0 || gap == 0.0 {
            continue;
        }
        let gap_m = partner.get(m) - own.get(m);
        let magnitude = step * rho.abs() * gap.abs();
        let shift = if rho > 0.0 {
            gap_m.signum() * magnitude.min(gap_m.abs())
        } else {
            -gap_m.signum() * magnitude
        };
        out.set(m, own.get(m) + shift);
    }
    out
}

/// Per-topic differences between two belief vectors, as updates with a shared reason.
pub fn diff_updates(
    agent: AgentId,
    old: &BeliefVector,
    new: &BeliefVector,
    topic: TopicId,
    reason: &str,
) -> BeliefRevision {
    let primary = BeliefUpdate {
        agent,
        topic,
        old: old.get(topic),
        new: new.get(topic),
        reason: reason.to_string(),
    };
    let spillover = (0..old.len())
        .filter(|&m| m != topic && old.get(m) != new.get(m))
        .map(|m| BeliefUpdate {
            agent,
            topic: m,
            old: old.get(m),
            new: new.get(m),
            reason: format!("spillover from topic {topic}: {reason}"),
        })
        .collect();
    BeliefRevision { primary, spillover }
}

/// Belief revision through a prompt-driven backend. Malformed or out-of-range replies are
/// re-asked once, then reported as errors.
pub fn llm_update(
    inputs: UpdateInputs,
    backend: &OpinionBackend,
    round: u32,
    log: &mut Transcript,
) -> Result<BeliefRevision, BackendError> {
    let agent = inputs.agent.persona.agent_id;
    let topic = inputs.topic;
    let old = inputs.agent.beliefs.clone();
    let text = prompts::belief_update(&inputs);
    let schema = Schema::Belief {
        labels: inputs.topics.iter().map(|t| t.label.clone()).collect(),
    };
    let reply = backend.ask(
        PromptPurpose::BeliefUpdate,
        agent,
        round,
        text,
        &PromptInputs::BeliefUpdate(inputs),
        &schema,
        log,
    )?;
    let Structured::Belief {
        new_belief,
        reason,
        related,
    } = reply
    else {
        return Err(BackendError::unexpected(PromptPurpose::BeliefUpdate, &reply));
    };
    let primary = BeliefUpdate {
        agent,
        topic,
        old: old.get(topic),
        new: clamp_belief(new_belief),
        reason: reason.clone(),
    };
    let spillover = related
        .into_iter()
        .filter(|(m, _)| *m != topic)
        .map(|(m, v)| BeliefUpdate {
            agent,
            topic: m,
            old: old.get(m),
            new: clamp_belief(v),
            reason: reason.clone(),
        })
        .collect();
    Ok(BeliefRevision { primary, spillover })
}

/// Applies decay to every component of every agent, unless the decay ablation is on.
pub fn end_of_round_decay(agents: &mut [AgentState], lambda: f64, no_decay: bool) {
    if no_decay {
        return;
    }
    for a in agents {
        a.beliefs.map_in_place(|v| apply_decay(v, lambda));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::init_population;
    use proptest::prelude::*;

    fn bv(v: &[f64]) -> BeliefVector {
        BeliefVector::new(v.to_vec())
    }

    fn coupled(k: usize, rho: f64) -> Couplings {
        let mut c = Couplings::decoupled(k);
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    c.values[a * k + b] = rho;
                }
            }
        }
        c
    }

    #[test]
    fn decay_examples() {
        assert_eq!(apply_decay(0.0, 0.3), 0.0);
        assert_eq!(apply_decay(1.7, 0.0), 1.7);
        // 2 * exp(-0.02), independently evaluated
        assert!((apply_decay(2.0, 0.01) - 1.960_397_346_613_510_7).abs() < 1e-15);
    }

    #[test]
    fn round_decay_examples() {
        let cfg = SimulationConfig {
            n_agents: 1,
            topics: crate::config::uncorrelated_topics(2),
            ..Default::default()
        };
        let mut agents = init_population(&cfg);
        agents[0].beliefs = bv(&[2.0, -2.0]);
        let mut frozen = agents.clone();
        end_of_round_decay(&mut frozen, 0.01, true);
        assert_eq!(frozen, agents);

        end_of_round_decay(&mut agents, 0.01, false);
        let v = agents[0].beliefs.values();
        assert!((v[0] - 1.960397).abs() < 1e-6);
        assert!((v[1] + 1.960397).abs() < 1e-6);

        agents[0].beliefs = bv(&[0.0, 0.0]);
        end_of_round_decay(&mut agents, 0.01, false);
        assert_eq!(agents[0].beliefs.values(), &[0.0, 0.0]);
    }

    #[test]
    fn update_examples() {
        let own = bv(&[0.5, -1.0, 1.5]);
        assert_eq!(numeric_update(&own, &own, 1, &coupled(3, 0.8), 0.3), own);

        let partner = bv(&[-1.0, 1.0, 0.0]);
        let out = numeric_update(&own, &partner, 1, &Couplings::decoupled(3), 0.3);
        assert_eq!(out.get(0), 0.5);
        assert_eq!(out.get(2), 1.5);
        assert!((out.get(1) - (-0.4)).abs() < 1e-15);

        let single = numeric_update(&bv(&[0.0]), &bv(&[2.0]), 0, &Couplings::decoupled(1), 0.5);
        assert_eq!(single.get(0), 1.0);
    }

    #[test]
    fn spillover_direction_follows_coupling() {
        let own = bv(&[0.0, 0.0]);
        let partner = bv(&[1.0, 1.0]);
        let pos = numeric_update(&own, &partner, 0, &coupled(2, 0.5), 0.4);
        assert!((pos.get(1) - 0.2).abs() < 1e-15);
        let neg = numeric_update(&own, &partner, 0, &coupled(2, -0.5), 0.4);
        assert!((neg.get(1) + 0.2).abs() < 1e-15);
        // attraction stops at the partner
        let near = bv(&[0.0, 0.95]);
        let capped = numeric_update(&near, &bv(&[2.0, 1.0]), 0, &coupled(2, 1.0), 1.0);
        assert_eq!(capped.get(1), 1.0);
    }

    #[test]
    fn diff_lists_spillover_only_for_changed_topics() {
        let old = bv(&[0.0, 1.0, 2.0]);
        let new = bv(&[0.5, 1.0, 1.5]);
        let rev = diff_updates(4, &old, &new, 0, "heard a convincing argument");
        assert_eq!(rev.primary.new, 0.5);
        assert_eq!(rev.spillover.len(), 1);
        assert_eq!(rev.spillover[0].topic, 2);
        let mut b = old.clone();
        rev.apply(&mut b);
        assert_eq!(b, new);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn decay_contracts_and_is_odd(v in -2.0f64..=2.0, lambda in 0.0f64..5.0) {
            let d = apply_decay(v, lambda);
            prop_assert!(d.abs() <= v.abs());
            prop_assert!(d == 0.0 || d.signum() == v.signum());
            prop_assert_eq!(apply_decay(-v, lambda), -d);
            if lambda > 0.0 && v != 0.0 {
                prop_assert!(d.abs() < v.abs());
            }
        }

        #[test]
        fn updates_stay_clamped(
            own in prop::collection::vec(prop::sample::select(vec![-2.0, 2.0, -1.999, 1.999, 0.0]), 3),
            partner in prop::collection::vec(prop::sample::select(vec![-2.0, 2.0, -1.0, 1.0]), 3),
            topic in 0usize..3,
            rho in -1.0f64..=1.0,
            step in 0.01f64..=1.0,
        ) {
            let out = numeric_update(&bv(&own), &bv(&partner), topic, &coupled(3, rho), step);
            prop_assert!(out.values().iter().all(|v| (-2.0..=2.0).contains(v)));
        }

        #[test]
        fn repeated_contact_converges_monotonically(v0 in -2.0f64..=2.0, u in -2.0f64..=2.0, step in 0.05f64..=1.0) {
            let partner = bv(&[u, 0.0]);
            let mut own = bv(&[v0, 0.3]);
            let mut gap = (u - v0).abs();
            for _ in 0..20 {
                own = numeric_update(&own, &partner, 0, &Couplings::decoupled(2), step);
                let g = (u - own.get(0)).abs();
                prop_assert!(g <= gap + 1e-15);
                gap = g;
                prop_assert_eq!(own.get(1), 0.3);
            }
        }
    }
}
