//! Two-layer agent memory: the current round's interactions, and a bounded store of
//! per-round summaries ranked by salience.

use serde::{Deserialize, Serialize};

use crate::agent::stance_of;
use crate::error::{Error, Result};
use crate::{AgentId, TopicId, BELIEF_MAX, BELIEF_MIN};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub round: u32,
    pub topic: TopicId,
    pub partner: AgentId,
    pub partner_stance: f64,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongTermRecord {
    pub round: u32,
    pub summary: String,
    /// Selection priority in (0, 1]; decays each round.
    pub salience: f64,
    pub interactions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryStore {
    capacity: usize,
    short_term: Vec<MemoryRecord>,
    long_term: Vec<LongTermRecord>,
}

impl MemoryStore {
    pub fn new(capacity: usize) -> Self {
        MemoryStore {
            capacity: capacity.max(1),
            short_term: Vec::new(),
            long_term: Vec::new(),
        }
    }

    pub fn short_term(&self) -> &[MemoryRecord] {
        &self.short_term
    }

    pub fn long_term(&self) -> &[LongTermRecord] {
        &self.long_term
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends an interaction to short-term memory after checking it against the topic set.
    pub fn record_interaction(&mut self, rec: MemoryRecord, n_topics: usize) -> Result<()> {
        if rec.topic >= n_topics {
            return Err(Error::Memory(format!(
                "topic {} outside the {n_topics}-topic set",
                rec.topic
            )));
        }
        if rec.summary.trim().is_empty() {
            return Err(Error::Memory("empty interaction summary".into()));
        }
        if !(BELIEF_MIN..=BELIEF_MAX).contains(&rec.partner_stance) {
            return Err(Error::Memory(format!(
                "partner stance {} outside [-2, 2]",
                rec.partner_stance
            )));
        }
        self.short_term.push(rec);
        Ok(())
    }

    /// Folds short-term memory into one long-term record.
    ///
    /// `summarize` may produce the summary text (for instance through a language model);
    /// when it returns `None` the records are concatenated instead. With an empty short-term
    /// buffer nothing happens and `summarize` is not called.
    pub fn consolidate(
        &mut self,
        round: u32,
        summarize: impl FnOnce(&[MemoryRecord]) -> Option<String>,
    ) {
        if self.short_term.is_empty() {
            return;
        }
        let records = std::mem::take(&mut self.short_term);
        let summary = summarize(&records)
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| concatenate(&records));
        self.long_term.push(LongTermRecord {
            round,
            summary,
            salience: 1.0,
            interactions: records.len(),
        });
        while self.long_term.len() > self.capacity {
            self.evict_one();
        }
    }

    fn evict_one(&mut self) {
        // lowest salience first; among equals the oldest (earliest index)
        let victim = self
            .long_term
            .iter()
            .enumerate()
            .min_by(|(ia, a), (ib, b)| a.salience.total_cmp(&b.salience).then(ia.cmp(ib)))
            .map(|(i, _)| i);
        if let Some(i) = victim {
            self.long_term.remove(i);
        }
    }

    pub fn decay_salience(&mut self, retention: f64) {
        for rec in &mut self.long_term {
            rec.salience = (rec.salience * retention).max(f64::MIN_POSITIVE);
        }
    }

    /// Long-term summaries, most recent first, cut off once the word budget is spent.
    pub fn prompt_excerpt(&self, word_budget: usize) -> Vec<String> {
        let mut out = Vec::new();
        let mut used = 0;
        for rec in self.long_term.iter().rev() {
            let words = rec.summary.split_whitespace().count();
            if used + words > word_budget {
                break;
            }
            used += words;
            out.push(format!("[round {}] {}", rec.round, rec.summary));
        }
        out
    }
}

/// Rule-based consolidation: one `topic/partner/stance` clause per record.
pub fn concatenate(records: &[MemoryRecord]) -> String {
    records
        .iter()
        .map(|r| {
            format!(
                "topic {} with user {} (stance {:+})",
                r.topic,
                r.partner,
                stance_of(r.partner_stance)
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}
