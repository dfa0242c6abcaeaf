//! Partner selection: bounded-confidence filtering or prompt-based matching, then one
//! shared topic per pair.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{mean_belief, AgentState};
use crate::config::{Mechanism, SimulationConfig, Topic};
use crate::llm::{
    prompts, AgentView, BackendError, MatchInputs, OpinionBackend, PromptInputs, PromptPurpose,
    Schema, Structured, Transcript,
};
use crate::network::SocialGraph;
use crate::rng::{self, Stage};
use crate::util::bounded_map;
use crate::{AgentId, TopicId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionPair {
    /// Initiator.
    pub a: AgentId,
    /// Chosen partner, a neighbor of `a`.
    pub b: AgentId,
    pub topic: TopicId,
    pub round: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub accept: bool,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDecision {
    pub initiator: AgentId,
    pub candidate: AgentId,
    pub decision: MatchDecision,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<InteractionPair>,
    pub decisions: Vec<CandidateDecision>,
}

/// Candidates whose mean belief lies within `epsilon` of the agent's, in input order.
pub fn hk_filter(agent: &AgentState, candidates: &[&AgentState], epsilon: f64) -> Vec<AgentId> {
    let own = mean_belief(agent);
    candidates
        .iter()
        .filter(|c| (own - mean_belief(c)).abs() <= epsilon)
        .map(|c| c.id())
        .collect()
}

pub fn hk_decision(agent: &AgentState, candidate: &AgentState, epsilon: f64) -> MatchDecision {
    let gap = (mean_belief(agent) - mean_belief(candidate)).abs();
    let accept = gap <= epsilon;
    MatchDecision {
        accept,
        reason: format!(
            "hk-mean: |mean gap| = {gap:.4} {} {epsilon}",
            if accept { "<=" } else { ">" }
        ),
    }
}

pub fn agent_view(agent: &AgentState, word_budget: usize) -> AgentView {
    AgentView {
        persona: agent.persona.clone(),
        beliefs: agent.beliefs.clone(),
        memory: agent.memory.prompt_excerpt(word_budget),
    }
}

/// Asks the backend whether `inputs.agent` should interact with `inputs.candidate`.
pub fn prompt_match(
    inputs: MatchInputs,
    backend: &OpinionBackend,
    round: u32,
    log: &mut Transcript,
) -> Result<MatchDecision, BackendError> {
    let agent = inputs.agent.persona.agent_id;
    let text = prompts::neighbor_match(&inputs);
    let reply = backend.ask(
        PromptPurpose::NeighborMatch,
        agent,
        round,
        text,
        &PromptInputs::NeighborMatch(inputs),
        &Schema::Decision,
        log,
    )?;
    match reply {
        Structured::Decision { accept, reason } => Ok(MatchDecision {
            accept,
            reason: reason.unwrap_or_else(|| {
                format!("model answered {} without a reason", if accept { "yes" } else { "no" })
            }),
        }),
        other => Err(BackendError::unexpected(PromptPurpose::NeighborMatch, &other)),
    }
}

fn screen_neighbors(
    i: AgentId,
    agents: &[AgentState],
    graph: &SocialGraph,
    round: u32,
    config: &SimulationConfig,
    topics: &Arc<[Topic]>,
    backend: &OpinionBackend,
    log: &mut Transcript,
) -> Result<Vec<CandidateDecision>, BackendError> {
    let me = &agents[i];
    let neighbors = graph.neighbors(i).expect("agent ids match graph nodes");
    let mut out = Vec::with_capacity(neighbors.len());
    for &j in neighbors {
        let decision = if config.ablations.no_interaction_filter {
            MatchDecision {
                accept: true,
                reason: "interaction filter disabled".into(),
            }
        } else if config.mechanism == Mechanism::HkMean || backend.is_numeric() {
            hk_decision(me, &agents[j], config.epsilon)
        } else {
            let inputs = MatchInputs {
                agent: agent_view(me, config.memory.prompt_token_budget),
                candidate: agent_view(&agents[j], config.memory.prompt_token_budget),
                epsilon: config.epsilon,
                topics: Arc::clone(topics),
            };
            prompt_match(inputs, backend, round, log)?
        };
        out.push(CandidateDecision {
            initiator: i,
            candidate: j,
            decision,
        });
    }
    Ok(out)
}

/// Builds this round's pairs. Agents initiate in ascending id order; each picks one accepted
/// neighbor uniformly at random, and the pair discusses the topic both were recommended, or
/// a uniformly random topic when their recommendations differ. Agents with no accepted
/// neighbor sit the round out. Being picked as a partner does not stop an agent from
/// initiating its own interaction.
///
/// `log` receives every backend call made, even when an error is returned.
pub fn select_pairs(
    agents: &[AgentState],
    graph: &SocialGraph,
    round: u32,
    config: &SimulationConfig,
    recommendations: &[TopicId],
    backend: &OpinionBackend,
    log: &mut Transcript,
) -> Result<Pairing, BackendError> {
    let topics: Arc<[Topic]> = Arc::from(config.topics.clone());
    let ids: Vec<AgentId> = (0..agents.len()).collect();
    let screened = bounded_map(&ids, backend.max_in_flight(), |&i| {
        let mut local = Transcript::new();
        let r = screen_neighbors(i, agents, graph, round, config, &topics, backend, &mut local);
        (r, local)
    });

    let mut pairing = Pairing::default();
    let mut first_err = None;
    let k = config.n_topics();
    for (i, (result, local)) in screened.into_iter().enumerate() {
        log.extend(local);
        let decisions = match result {
            Ok(d) => d,
            Err(e) => {
                first_err.get_or_insert(e);
                continue;
            }
        };
        if first_err.is_some() {
            continue;
        }
        let accepted: Vec<AgentId> = decisions
            .iter()
            .filter(|d| d.decision.accept)
            .map(|d| d.candidate)
            .collect();
        pairing.decisions.extend(decisions);
        if accepted.is_empty() {
            continue;
        }
        let mut rng = rng::stream(config.seed, round, Stage::Pairing, i as u64);
        let partner = accepted[rng.random_range(0..accepted.len())];
        let topic = if recommendations[i] == recommendations[partner] {
            recommendations[i]
        } else {
            rng.random_range(0..k)
        };
        pairing.pairs.push(InteractionPair {
            a: i,
            b: partner,
            topic,
            round,
        });
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(pairing),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{init_population, BeliefVector};
    use crate::config::uncorrelated_topics;
    use crate::network::generate_scale_free;
    use proptest::prelude::*;

    fn population(means: &[f64]) -> Vec<AgentState> {
        let cfg = SimulationConfig {
            n_agents: means.len(),
            topics: uncorrelated_topics(1),
            ..Default::default()
        };
        let mut pop = init_population(&cfg);
        for (a, &m) in pop.iter_mut().zip(means) {
            a.beliefs = BeliefVector::new(vec![m]);
        }
        pop
    }

    #[test]
    fn hk_filter_examples() {
        let pop = population(&[0.0, 0.05, 0.5]);
        let cands: Vec<&AgentState> = pop[1..].iter().collect();
        assert_eq!(hk_filter(&pop[0], &cands, 0.1), vec![1]);

        let same = population(&[0.7, 0.7, 0.7]);
        let cands: Vec<&AgentState> = same[1..].iter().collect();
        assert_eq!(hk_filter(&same[0], &cands, 0.0), vec![1, 2]);

        let spread = population(&[2.0, -2.0, 0.0]);
        let cands: Vec<&AgentState> = spread[1..].iter().collect();
        assert_eq!(hk_filter(&spread[0], &cands, 4.0), vec![1, 2]);
    }

    fn setup(n: usize, seed: u64) -> (SimulationConfig, Vec<AgentState>, SocialGraph) {
        let cfg = SimulationConfig {
            n_agents: n,
            seed,
            ..Default::default()
        };
        let pop = init_population(&cfg);
        let g = generate_scale_free(n, 2, &mut rng::seeded(seed)).unwrap();
        (cfg, pop, g)
    }

    #[test]
    fn identical_beliefs_pair_everyone() {
        let (cfg, mut pop, g) = setup(20, 3);
        for a in &mut pop {
            a.beliefs = BeliefVector::new(vec![0.4, 0.4, 0.4]);
        }
        let recs = vec![0; 20];
        let p = select_pairs(&pop, &g, 1, &cfg, &recs, &OpinionBackend::numeric(), &mut Transcript::new()).unwrap();
        assert_eq!(p.pairs.len(), 20);
        assert!(p.pairs.iter().all(|pr| pr.topic == 0));
    }

    #[test]
    fn outlier_sits_out() {
        let (cfg, mut pop, g) = setup(20, 3);
        for a in &mut pop {
            a.beliefs = BeliefVector::new(vec![-2.0; 3]);
        }
        pop[0].beliefs = BeliefVector::new(vec![2.0; 3]);
        let recs = vec![1; 20];
        let p = select_pairs(&pop, &g, 1, &cfg, &recs, &OpinionBackend::numeric(), &mut Transcript::new()).unwrap();
        assert!(p.pairs.iter().all(|pr| pr.a != 0 && pr.b != 0));
        assert!(p.decisions.iter().filter(|d| d.initiator == 0).all(|d| !d.decision.accept));
    }

    #[test]
    fn pairs_are_valid_and_reproducible() {
        let (mut cfg, pop, g) = setup(50, 50);
        cfg.epsilon = 0.4;
        let recs: Vec<TopicId> = (0..50).map(|i| i % 3).collect();
        let run = || {
            select_pairs(&pop, &g, 4, &cfg, &recs, &OpinionBackend::numeric(), &mut Transcript::new()).unwrap()
        };
        let first = run();
        assert_eq!(first, run());
        assert!(!first.pairs.is_empty());
        for p in &first.pairs {
            assert_ne!(p.a, p.b);
            assert!(g.neighbors(p.a).unwrap().contains(&p.b));
            assert!(p.topic < 3);
            if recs[p.a] == recs[p.b] {
                assert_eq!(p.topic, recs[p.a]);
            }
        }
        assert!(first.pairs.windows(2).all(|w| w[0].a < w[1].a));
    }

    #[test]
    fn stub_prompt_match_agrees_with_hk() {
        let (mut cfg, pop, g) = setup(30, 8);
        cfg.epsilon = 0.3;
        let recs = vec![0; 30];
        let hk = select_pairs(&pop, &g, 2, &cfg, &recs, &OpinionBackend::numeric(), &mut Transcript::new()).unwrap();
        cfg.mechanism = Mechanism::PromptMatch;
        let mut log = Transcript::new();
        let stub = select_pairs(&pop, &g, 2, &cfg, &recs, &OpinionBackend::stub().in_flight(4), &mut log).unwrap();
        assert_eq!(hk.pairs, stub.pairs);
        let accepts = |p: &Pairing| p.decisions.iter().map(|d| d.decision.accept).collect::<Vec<_>>();
        assert_eq!(accepts(&hk), accepts(&stub));
        assert_eq!(log.len(), 2 * g.edge_count());
        assert!(stub.decisions.iter().all(|d| !d.decision.reason.is_empty()));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn filter_is_monotone_subset(
            means in prop::collection::vec(-2.0f64..=2.0, 2..8),
            e1 in 0.0f64..4.0,
            e2 in 0.0f64..4.0,
        ) {
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let pop = population(&means);
            let cands: Vec<&AgentState> = pop[1..].iter().collect();
            let small = hk_filter(&pop[0], &cands, lo);
            let large = hk_filter(&pop[0], &cands, hi);
            prop_assert!(small.iter().all(|id| large.contains(id)));
            prop_assert!(large.iter().all(|id| *id >= 1 && *id < pop.len()));
        }

        #[test]
        fn stub_match_equals_hk(a in -2.0f64..=2.0, b in -2.0f64..=2.0, eps in 0.0f64..1.0) {
            let pop = population(&[a, b]);
            let topics: Arc<[Topic]> = Arc::from(uncorrelated_topics(1));
            let inputs = MatchInputs {
                agent: agent_view(&pop[0], 64),
                candidate: agent_view(&pop[1], 64),
                epsilon: eps,
                topics,
            };
            let d = prompt_match(inputs, &OpinionBackend::stub(), 1, &mut Transcript::new()).unwrap();
            let cands = [&pop[1]];
            prop_assert_eq!(d.accept, !hk_filter(&pop[0], &cands, eps).is_empty());
        }
    }
}
