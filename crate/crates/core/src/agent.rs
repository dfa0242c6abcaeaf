use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::memory::MemoryStore;
use crate::rng::{self, Stage};
use crate::{AgentId, TopicId, BELIEF_MAX, BELIEF_MIN};

/// Stance over every topic, each component kept in [-2, 2].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BeliefVector(Vec<f64>);

impl BeliefVector {
    /// Builds a vector, clamping each component into range.
    pub fn new(values: Vec<f64>) -> Self {
        BeliefVector(values.into_iter().map(clamp_belief).collect())
    }

    pub fn zeros(k: usize) -> Self {
        BeliefVector(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, topic: TopicId) -> f64 {
        self.0[topic]
    }

    pub fn set(&mut self, topic: TopicId, value: f64) {
        self.0[topic] = clamp_belief(value);
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Components rounded to the nearest integer stance, as shown to language models.
    pub fn stances(&self) -> Vec<i32> {
        self.0.iter().map(|v| stance_of(*v)).collect()
    }

    pub fn map_in_place(&mut self, f: impl Fn(f64) -> f64) {
        for v in &mut self.0 {
            *v = clamp_belief(f(*v));
        }
    }
}

pub fn clamp_belief(v: f64) -> f64 {
    if v.is_nan() {
        return 0.0;
    }
    v.clamp(BELIEF_MIN, BELIEF_MAX)
}

/// Nearest integer stance in -2..=2.
pub fn stance_of(v: f64) -> i32 {
    clamp_belief(v).round() as i32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Education {
    Primary,
    Secondary,
    Bachelor,
    Postgraduate,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Female => "female",
            Gender::Male => "male",
        })
    }
}

impl fmt::Display for Education {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Education::Primary => "primary school",
            Education::Secondary => "secondary school",
            Education::Bachelor => "bachelor's degree",
            Education::Postgraduate => "postgraduate degree",
        })
    }
}

pub const TRAIT_NAMES: [(&str, &str, &str); 5] = [
    ("openness", "curious and open to new ideas", "conventional and cautious about new ideas"),
    ("conscientiousness", "organized and dependable", "spontaneous and careless"),
    ("extraversion", "outgoing and talkative", "reserved and quiet"),
    ("agreeableness", "cooperative and trusting", "competitive and skeptical"),
    ("neuroticism", "anxious and easily stressed", "calm and emotionally stable"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaProfile {
    pub agent_id: AgentId,
    pub age: u32,
    pub gender: Gender,
    pub education: Education,
    /// Pole of each Big Five dimension, in `TRAIT_NAMES` order; `true` is the positive pole.
    pub big_five: [bool; 5],
}

impl PersonaProfile {
    pub fn describe(&self) -> String {
        let traits: Vec<String> = TRAIT_NAMES
            .iter()
            .zip(self.big_five)
            .map(|((name, hi, lo), pos)| format!("{name}: {}", if pos { hi } else { lo }))
            .collect();
        format!(
            "User {} | age {} | {} | education: {} | {}",
            self.agent_id,
            self.age,
            self.gender,
            self.education,
            traits.join("; ")
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub persona: PersonaProfile,
    pub beliefs: BeliefVector,
    /// Topics of every interaction this agent took part in, oldest first.
    pub topic_history: Vec<TopicId>,
    pub memory: MemoryStore,
}

impl AgentState {
    pub fn id(&self) -> AgentId {
        self.persona.agent_id
    }
}

/// Average stance across all topics.
pub fn mean_belief(agent: &AgentState) -> f64 {
    agent.beliefs.mean()
}

/// Draws the population for a run: personas and initial beliefs uniform on [-2, 2].
pub fn init_population(config: &SimulationConfig) -> Vec<AgentState> {
    let mut rng = rng::stream(config.seed, 0, Stage::Population, 0);
    let k = config.n_topics();
    let [age_lo, age_hi] = config.age_range;
    (0..config.n_agents)
        .map(|id| {
            let age = rng.random_range(age_lo..=age_hi);
            let gender = if rng.random_bool(0.5) {
                Gender::Female
            } else {
                Gender::Male
            };
            let education = match rng.random_range(0..4) {
                0 => Education::Primary,
                1 => Education::Secondary,
                2 => Education::Bachelor,
                _ => Education::Postgraduate,
            };
            let mut big_five = [false; 5];
            for t in &mut big_five {
                *t = rng.random_bool(0.5);
            }
            let beliefs = (0..k)
                .map(|_| rng.random_range(BELIEF_MIN..=BELIEF_MAX))
                .collect();
            AgentState {
                persona: PersonaProfile {
                    agent_id: id,
                    age,
                    gender,
                    education,
                    big_five,
                },
                beliefs: BeliefVector::new(beliefs),
                topic_history: Vec::new(),
                memory: MemoryStore::new(config.memory.capacity),
            }
        })
        .collect()
}
