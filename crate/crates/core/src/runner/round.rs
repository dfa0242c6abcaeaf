//! One synchronous round: recommend → pair → exchange → update → consolidate → decay → measure.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::beliefs::{diff_updates, end_of_round_decay, llm_update, numeric_update, BeliefRevision, Couplings};
use crate::config::{SimulationConfig, Topic};
use crate::interaction::{agent_view, select_pairs, InteractionPair};
use crate::llm::{
    prompts, BackendError, ConsolidateInputs, OpinionBackend, PromptInputs, PromptPurpose,
    RecoInputs, Schema, Structured, Transcript, UpdateInputs,
};
use crate::memory::MemoryRecord;
use crate::metrics::{MetricsSnapshot, TopicMetrics};
use crate::network::SocialGraph;
use crate::rng::{self, Stage};
use crate::topics::{numeric_recommend, recommend_topic, uniform_topic, TopicStats};
use crate::util::bounded_map;
use crate::{AgentId, TopicId};

/// One line of the event log. `stage` names the round stage that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Event {
    Recommend {
        round: u32,
        agent: AgentId,
        topic: TopicId,
        /// `false` when the topic was drawn uniformly (topic choice ablated).
        scored: bool,
    },
    Match {
        round: u32,
        initiator: AgentId,
        candidate: AgentId,
        accept: bool,
        reason: String,
    },
    Pair {
        round: u32,
        a: AgentId,
        b: AgentId,
        topic: TopicId,
    },
    Exchange {
        round: u32,
        agent: AgentId,
        partner: AgentId,
        topic: TopicId,
        partner_stance: f64,
    },
    Update {
        round: u32,
        agent: AgentId,
        topic: TopicId,
        old: f64,
        new: f64,
        reason: String,
    },
    Consolidate {
        round: u32,
        agent: AgentId,
        interactions: usize,
        summary: String,
    },
    Decay {
        round: u32,
        lambda: f64,
        applied: bool,
    },
    Metrics {
        round: u32,
        #[serde(flatten)]
        mean: TopicMetrics,
    },
}

impl Event {
    /// Position of the producing stage within a round; non-decreasing along a round's events.
    pub fn stage_index(&self) -> u8 {
        match self {
            Event::Recommend { .. } => 0,
            Event::Match { .. } | Event::Pair { .. } => 1,
            Event::Exchange { .. } => 2,
            Event::Update { .. } => 3,
            Event::Consolidate { .. } => 4,
            Event::Decay { .. } => 5,
            Event::Metrics { .. } => 6,
        }
    }

    pub fn round(&self) -> u32 {
        match self {
            Event::Recommend { round, .. }
            | Event::Match { round, .. }
            | Event::Pair { round, .. }
            | Event::Exchange { round, .. }
            | Event::Update { round, .. }
            | Event::Consolidate { round, .. }
            | Event::Decay { round, .. }
            | Event::Metrics { round, .. } => *round,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub snapshot: MetricsSnapshot,
    pub stats: TopicStats,
    pub events: Vec<Event>,
    pub transcript: Transcript,
}

/// A round that hit a backend failure. Agent state is left untouched.
#[derive(Debug, Clone)]
pub struct RoundFailure {
    pub error: BackendError,
    pub transcript: Transcript,
}

struct Ctx<'a> {
    config: &'a SimulationConfig,
    graph: &'a SocialGraph,
    backend: &'a OpinionBackend,
    topics: Arc<[Topic]>,
    round: u32,
}

/// Runs round `round` (1-based). `agents` is only replaced once the whole round succeeded.
pub fn run_round(
    agents: &mut Vec<AgentState>,
    graph: &SocialGraph,
    config: &SimulationConfig,
    backend: &OpinionBackend,
    round: u32,
) -> Result<RoundOutcome, RoundFailure> {
    let ctx = Ctx {
        config,
        graph,
        backend,
        topics: Arc::from(config.topics.clone()),
        round,
    };
    let mut transcript = Transcript::new();
    let mut events = Vec::new();
    let mut next = agents.clone();
    match round_stages(&ctx, &mut next, &mut events, &mut transcript) {
        Ok(()) => {
            *agents = next;
            let stats = TopicStats::compute(agents, config.n_topics(), config.fatigue_b);
            let snapshot = MetricsSnapshot::compute(round, agents, graph, config.epsilon);
            events.push(Event::Metrics {
                round,
                mean: snapshot.mean,
            });
            Ok(RoundOutcome {
                snapshot,
                stats,
                events,
                transcript,
            })
        }
        Err(error) => Err(RoundFailure { error, transcript }),
    }
}

/// Collects per-agent results in id order, merging their transcripts; the first error wins.
fn gather<R>(
    results: Vec<(Result<R, BackendError>, Transcript)>,
    log: &mut Transcript,
) -> Result<Vec<R>, BackendError> {
    let mut out = Vec::with_capacity(results.len());
    let mut first_err = None;
    for (r, t) in results {
        log.extend(t);
        match r {
            Ok(v) => out.push(v),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match first_err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

fn round_stages(
    ctx: &Ctx<'_>,
    agents: &mut [AgentState],
    events: &mut Vec<Event>,
    log: &mut Transcript,
) -> Result<(), BackendError> {
    let recs = recommend(ctx, agents, events, log)?;

    let pairing = select_pairs(agents, ctx.graph, ctx.round, ctx.config, &recs, ctx.backend, log)?;
    for d in pairing.decisions {
        events.push(Event::Match {
            round: ctx.round,
            initiator: d.initiator,
            candidate: d.candidate,
            accept: d.decision.accept,
            reason: d.decision.reason,
        });
    }
    for p in &pairing.pairs {
        events.push(Event::Pair {
            round: ctx.round,
            a: p.a,
            b: p.b,
            topic: p.topic,
        });
    }

    let snapshot: Vec<AgentState> = agents.to_vec();
    let exchanges = exchange(ctx, agents, &snapshot, &pairing.pairs, events);
    update_beliefs(ctx, agents, &snapshot, &exchanges, events, log)?;
    consolidate(ctx, agents, events, log)?;

    let cfg = ctx.config;
    end_of_round_decay(agents, cfg.decay_lambda, cfg.ablations.no_decay);
    events.push(Event::Decay {
        round: ctx.round,
        lambda: cfg.decay_lambda,
        applied: !cfg.ablations.no_decay,
    });
    Ok(())
}

fn recommend(
    ctx: &Ctx<'_>,
    agents: &[AgentState],
    events: &mut Vec<Event>,
    log: &mut Transcript,
) -> Result<Vec<TopicId>, BackendError> {
    let cfg = ctx.config;
    let k = cfg.n_topics();
    let recs: Vec<TopicId> = if cfg.ablations.no_topic_choose {
        (0..agents.len())
            .map(|i| {
                let mut rng = rng::stream(cfg.seed, ctx.round, Stage::TopicChoice, i as u64);
                uniform_topic(&mut rng, k)
            })
            .collect()
    } else {
        let stats = TopicStats::compute(agents, k, cfg.fatigue_b);
        let tie_draw = |i: usize| {
            agents[i].topic_history.is_empty().then(|| {
                rng::stream(cfg.seed, ctx.round, Stage::Recommend, i as u64).random::<f64>()
            })
        };
        if ctx.backend.is_numeric() {
            (0..agents.len())
                .map(|i| numeric_recommend(&stats.heat, &stats.fatigue[i], cfg.numeric.heat_weight, tie_draw(i)))
                .collect()
        } else {
            let ids: Vec<usize> = (0..agents.len()).collect();
            let results = bounded_map(&ids, ctx.backend.max_in_flight(), |&i| {
                let mut local = Transcript::new();
                let inputs = RecoInputs {
                    agent: agent_view(&agents[i], cfg.memory.prompt_token_budget),
                    topics: Arc::clone(&ctx.topics),
                    heat: stats.heat.clone(),
                    fatigue: stats.fatigue[i].clone(),
                    heat_weight: cfg.numeric.heat_weight,
                    tie_draw: tie_draw(i),
                };
                let r = recommend_topic(inputs, ctx.backend, ctx.round, &mut local);
                (r, local)
            });
            gather(results, log)?
        }
    };
    for (agent, &topic) in recs.iter().enumerate() {
        events.push(Event::Recommend {
            round: ctx.round,
            agent,
            topic,
            scored: !cfg.ablations.no_topic_choose,
        });
    }
    Ok(recs)
}

/// Per-agent exchanges `(partner, topic, message)` in pair order. Both sides of a pair hear
/// each other; messages and stances come from the round-start snapshot.
fn exchange(
    ctx: &Ctx<'_>,
    agents: &mut [AgentState],
    snapshot: &[AgentState],
    pairs: &[InteractionPair],
    events: &mut Vec<Event>,
) -> Vec<Vec<(AgentId, TopicId, String)>> {
    let k = ctx.config.n_topics();
    let budget = ctx.config.memory.prompt_token_budget;
    let mut per_agent = vec![Vec::new(); agents.len()];
    for p in pairs {
        for (me, other) in [(p.a, p.b), (p.b, p.a)] {
            let stance = snapshot[other].beliefs.get(p.topic);
            let message = prompts::partner_message(&agent_view(&snapshot[other], budget), &ctx.topics[p.topic]);
            agents[me]
                .memory
                .record_interaction(
                    MemoryRecord {
                        round: ctx.round,
                        topic: p.topic,
                        partner: other,
                        partner_stance: stance,
                        summary: message.clone(),
                    },
                    k,
                )
                .expect("pair topics come from the configured topic set");
            agents[me].topic_history.push(p.topic);
            events.push(Event::Exchange {
                round: ctx.round,
                agent: me,
                partner: other,
                topic: p.topic,
                partner_stance: stance,
            });
            per_agent[me].push((other, p.topic, message));
        }
    }
    per_agent
}

fn update_beliefs(
    ctx: &Ctx<'_>,
    agents: &mut [AgentState],
    snapshot: &[AgentState],
    exchanges: &[Vec<(AgentId, TopicId, String)>],
    events: &mut Vec<Event>,
    log: &mut Transcript,
) -> Result<(), BackendError> {
    let cfg = ctx.config;
    let couplings = Couplings::from_config(cfg);
    let budget = cfg.memory.prompt_token_budget;
    let step = cfg.numeric.step;
    let ids: Vec<usize> = (0..agents.len()).collect();
    let shared: &[AgentState] = agents;
    let results = bounded_map(&ids, ctx.backend.max_in_flight(), |&i| {
        let mut local = Transcript::new();
        let mut me = shared[i].clone();
        let mut revisions = Vec::new();
        for (partner, topic, message) in &exchanges[i] {
            let other = &snapshot[*partner];
            let rev = if ctx.backend.is_numeric() {
                let new = numeric_update(&me.beliefs, &other.beliefs, *topic, &couplings, step);
                let reason = format!("moved {:.0}% toward user {partner}", step * 100.0);
                diff_updates(i, &me.beliefs, &new, *topic, &reason)
            } else {
                let inputs = UpdateInputs {
                    agent: agent_view(&me, budget),
                    partner: agent_view(other, budget),
                    topic: *topic,
                    partner_message: message.clone(),
                    topics: Arc::clone(&ctx.topics),
                    couplings: couplings.clone(),
                    step,
                };
                match llm_update(inputs, ctx.backend, ctx.round, &mut local) {
                    Ok(r) => r,
                    Err(e) => return (Err(e), local),
                }
            };
            rev.apply(&mut me.beliefs);
            revisions.push(rev);
        }
        (Ok((me.beliefs, revisions)), local)
    });
    let committed: Vec<(_, Vec<BeliefRevision>)> = gather(results, log)?;
    for (i, (beliefs, revisions)) in committed.into_iter().enumerate() {
        agents[i].beliefs = beliefs;
        for u in revisions.iter().flat_map(BeliefRevision::updates) {
            events.push(Event::Update {
                round: ctx.round,
                agent: u.agent,
                topic: u.topic,
                old: u.old,
                new: u.new,
                reason: u.reason.clone(),
            });
        }
    }
    Ok(())
}

fn consolidate(
    ctx: &Ctx<'_>,
    agents: &mut [AgentState],
    events: &mut Vec<Event>,
    log: &mut Transcript,
) -> Result<(), BackendError> {
    let ids: Vec<usize> = (0..agents.len()).collect();
    let shared: &[AgentState] = agents;
    let results = bounded_map(&ids, ctx.backend.max_in_flight(), |&i| {
        let mut local = Transcript::new();
        let records = shared[i].memory.short_term();
        if records.is_empty() || ctx.backend.is_numeric() {
            return (Ok(None), local);
        }
        let inputs = ConsolidateInputs {
            agent: i,
            round: ctx.round,
            records: records.to_vec(),
            topics: Arc::clone(&ctx.topics),
        };
        let text = prompts::consolidation(&inputs);
        let r = ctx
            .backend
            .ask(
                PromptPurpose::MemoryConsolidate,
                i,
                ctx.round,
                text,
                &PromptInputs::Consolidate(inputs),
                &Schema::Summary,
                &mut local,
            )
            .and_then(|s| match s {
                Structured::Summary(text) => Ok(Some(text)),
                other => Err(BackendError::unexpected(PromptPurpose::MemoryConsolidate, &other)),
            });
        (r, local)
    });
    let summaries = gather(results, log)?;
    let retention = ctx.config.memory.retention;
    for (agent, summary) in agents.iter_mut().zip(summaries) {
        agent.memory.decay_salience(retention);
        let interactions = agent.memory.short_term().len();
        if interactions == 0 {
            continue;
        }
        agent.memory.consolidate(ctx.round, |_| summary);
        let stored = agent
            .memory
            .long_term()
            .last()
            .map(|r| r.summary.clone())
            .unwrap_or_default();
        events.push(Event::Consolidate {
            round: ctx.round,
            agent: agent.id(),
            interactions,
            summary: stored,
        });
    }
    Ok(())
}
