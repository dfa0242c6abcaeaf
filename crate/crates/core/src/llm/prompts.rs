//! Prompt templates. Each carries every structured input of its purpose; the wording is ours.

use std::fmt::Write as _;

use super::{AgentView, ConsolidateInputs, MatchInputs, RecoInputs, UpdateInputs};
use crate::agent::stance_of;
use crate::config::Topic;

pub const SYSTEM: &str = "You are role-playing an ordinary social media user in a research \
simulation. Stay in character, reason from the profile and memories you are given, and \
always answer with a single JSON object in exactly the requested format.";

pub fn stance_word(stance: i32) -> &'static str {
    match stance {
        i32::MIN..=-2 => "strongly oppose",
        -1 => "oppose",
        0 => "neutral",
        1 => "support",
        _ => "strongly support",
    }
}

fn topic_list(out: &mut String, topics: &[Topic]) {
    for t in topics {
        let _ = writeln!(out, "- T{}: {} ({})", t.id, t.label, t.stance_frame);
        if let Some(c) = &t.correlation {
            let _ = writeln!(out, "  relation to T0: {}", c.prompt_phrase);
        }
    }
}

fn belief_block(out: &mut String, view: &AgentView, topics: &[Topic]) {
    let stances = view.beliefs.stances();
    let _ = writeln!(
        out,
        "Belief distribution: [{}]",
        stances.iter().map(|s| format!("{s}")).collect::<Vec<_>>().join(", ")
    );
    for (t, s) in topics.iter().zip(&stances) {
        let _ = writeln!(out, "  T{} {}: {s:+} ({})", t.id, t.label, stance_word(*s));
    }
}

fn profile_block(out: &mut String, heading: &str, view: &AgentView, topics: &[Topic]) {
    let _ = writeln!(out, "{heading}");
    let _ = writeln!(out, "Attributes: {}", view.persona.describe());
    belief_block(out, view, topics);
}

fn memory_block(out: &mut String, memory: &[String]) {
    if memory.is_empty() {
        let _ = writeln!(out, "Long-term memory: (nothing yet)");
        return;
    }
    let _ = writeln!(out, "Long-term memory, most recent first:");
    for m in memory {
        let _ = writeln!(out, "  {m}");
    }
}

const SCALE: &str = "Belief scale: -2 strongly oppose, -1 oppose, 0 neutral, 1 support, 2 strongly support.";

pub fn neighbor_match(inputs: &MatchInputs) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Decide whether you want to interact with a neighbor in your social network.\n");
    let _ = writeln!(out, "Topics:");
    topic_list(&mut out, &inputs.topics);
    let _ = writeln!(out, "{SCALE}\n");
    profile_block(&mut out, "== You ==", &inputs.agent, &inputs.topics);
    let _ = writeln!(out);
    profile_block(&mut out, "== Candidate neighbor ==", &inputs.candidate, &inputs.topics);
    let _ = writeln!(
        out,
        "\nConsider how similar your attributes and overall beliefs are. Reply with JSON only:\n\
         {{\"decision\": \"yes\" or \"no\", \"reason\": \"one or two sentences\"}}"
    );
    out
}

pub fn topic_recommendation(inputs: &RecoInputs) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Choose the single topic you want to discuss today.\n");
    let _ = writeln!(out, "Attributes: {}", inputs.agent.persona.describe());
    memory_block(&mut out, &inputs.agent.memory);
    let _ = writeln!(out, "\nCandidate topics with group heat (share of all recent discussion) and your fatigue (0 = fresh, 1 = exhausted):");
    for (t, (h, f)) in inputs.topics.iter().zip(inputs.heat.iter().zip(&inputs.fatigue)) {
        let _ = writeln!(out, "- T{}: {} | heat {h:.3} | fatigue {f:.3}", t.id, t.label);
    }
    let _ = writeln!(
        out,
        "\nPopular topics draw attention, but you lose interest in topics you have discussed a lot. \
         Reply with JSON only: {{\"topic\": \"T<id>\", \"reason\": \"short explanation\"}}"
    );
    out
}

pub fn partner_message(partner: &AgentView, topic: &Topic) -> String {
    let s = stance_of(partner.beliefs.get(topic.id));
    format!(
        "User {} says they {} \"{}\" (stance {s:+}).",
        partner.persona.agent_id,
        stance_word(s),
        topic.label
    )
}

pub fn belief_update(inputs: &UpdateInputs) -> String {
    let topic = &inputs.topics[inputs.topic];
    let mut out = String::new();
    let _ = writeln!(out, "You just discussed T{}: {} with another user.\n", topic.id, topic.label);
    let _ = writeln!(out, "Topics:");
    topic_list(&mut out, &inputs.topics);
    let _ = writeln!(out, "{SCALE}\n");
    profile_block(&mut out, "== You ==", &inputs.agent, &inputs.topics);
    memory_block(&mut out, &inputs.agent.memory);
    let _ = writeln!(out, "\nWhat they told you: {}", inputs.partner_message);
    if let Some(c) = &topic.correlation {
        let _ = writeln!(out, "How this topic relates to the main topic: {}", c.prompt_phrase);
    }
    let _ = writeln!(
        out,
        "\nReflect on the conversation and decide your new belief on T{id}. If it changes how you see \
         related topics, include them. Reply with JSON only:\n\
         {{\"new_belief\": integer from -2 to 2, \"reason\": \"why\", \"related\": {{\"T<id>\": integer}} (optional)}}",
        id = topic.id
    );
    out
}

pub fn consolidation(inputs: &ConsolidateInputs) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "Summarize today's conversations (round {}) into one short memory entry for user {}.\n",
        inputs.round, inputs.agent
    );
    for r in &inputs.records {
        let label = inputs
            .topics
            .get(r.topic)
            .map_or("unknown topic", |t| t.label.as_str());
        let s = stance_of(r.partner_stance);
        let _ = writeln!(out, "- with user {} on \"{label}\": they {} ({s:+}). {}", r.partner, stance_word(s), r.summary);
    }
    let _ = writeln!(out, "\nReply with JSON only: {{\"summary\": \"one or two sentences\"}}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{init_population, BeliefVector};
    use crate::config::{correlated_topics, CorrelationKind, SimulationConfig};
    use crate::beliefs::Couplings;
    use std::sync::Arc;

    fn views() -> (AgentView, AgentView, Arc<[Topic]>) {
        let cfg = SimulationConfig {
            n_agents: 2,
            topics: correlated_topics(CorrelationKind::StrongNegative),
            ..Default::default()
        };
        let mut pop = init_population(&cfg);
        pop[0].beliefs = BeliefVector::new(vec![1.2, -0.4]);
        pop[1].beliefs = BeliefVector::new(vec![-2.0, 2.0]);
        let v = |i: usize| AgentView {
            persona: pop[i].persona.clone(),
            beliefs: pop[i].beliefs.clone(),
            memory: vec!["[round 1] chatted with user 3".into()],
        };
        (v(0), v(1), Arc::from(cfg.topics))
    }

    #[test]
    fn match_prompt_has_attributes_and_beliefs() {
        let (a, b, topics) = views();
        let p = neighbor_match(&MatchInputs { agent: a.clone(), candidate: b, epsilon: 0.1, topics });
        assert!(p.contains(&format!("age {}", a.persona.age)));
        assert!(p.contains("Belief distribution: [1, 0]"));
        assert!(p.contains("Belief distribution: [-2, 2]"));
        assert!(p.contains("\"decision\""));
    }

    #[test]
    fn update_prompt_carries_relation_and_message() {
        let (a, b, topics) = views();
        let msg = partner_message(&b, &topics[1]);
        assert!(msg.contains("strongly support"));
        let p = belief_update(&UpdateInputs {
            agent: a,
            partner: b,
            topic: 1,
            partner_message: msg.clone(),
            couplings: Couplings::decoupled(2),
            topics,
            step: 0.3,
        });
        assert!(p.contains(&msg));
        assert!(p.contains("clearly opposed to the main topic"));
        assert!(p.contains("chatted with user 3"));
    }
}
