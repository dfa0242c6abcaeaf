//! Strict reply parsing.
//!
//! A reply must contain one JSON object; prose around it is ignored and the first balanced
//! object that parses is used. Normalization is limited to trimming and case-folding enum
//! values and topic references, and accepting integer-valued floats such as `1.0` for
//! beliefs. Anything else that does not fit the schema is an error.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::{TopicId, BELIEF_MAX, BELIEF_MIN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{0}")]
pub struct ParseError(pub String);

fn fail<T>(msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError(msg.into()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Schema {
    /// `{"decision": "yes" | "no", "reason"?: text}`
    Decision,
    /// `{"topic": <label | "T<id>" | id>, "reason"?: text}`
    TopicChoice { labels: Vec<String> },
    /// `{"new_belief": number in [-2, 2], "reason": text, "related"?: {topic: number}}`
    Belief { labels: Vec<String> },
    /// `{"summary": text}`
    Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Structured {
    Decision { accept: bool, reason: Option<String> },
    Topic(TopicId),
    Belief {
        new_belief: f64,
        reason: String,
        related: Vec<(TopicId, f64)>,
    },
    Summary(String),
}

/// Finds the first `{...}` span, balanced outside string literals, that parses as an object.
pub fn extract_object(reply: &str) -> Option<Map<String, Value>> {
    let bytes = reply.as_bytes();
    let mut start = 0;
    while let Some(off) = reply[start..].find('{') {
        let open = start + off;
        if let Some(close) = balanced_end(bytes, open) {
            if let Ok(Value::Object(map)) = serde_json::from_str(&reply[open..=close]) {
                return Some(map);
            }
        }
        start = open + 1;
    }
    None
}

fn balanced_end(bytes: &[u8], open: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(open) {
        if in_str {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn text_field(obj: &Map<String, Value>, key: &str) -> Result<Option<String>, ParseError> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.trim().to_string())),
        Some(other) => fail(format!("field `{key}` must be text, got {other}")),
    }
}

fn belief_value(v: &Value, what: &str) -> Result<f64, ParseError> {
    let Some(x) = v.as_f64() else {
        return fail(format!("{what} must be a number, got {v}"));
    };
    if !x.is_finite() || !(BELIEF_MIN..=BELIEF_MAX).contains(&x) {
        return fail(format!("{what} {x} outside [-2, 2]"));
    }
    Ok(x)
}

/// Resolves a topic reference: a label (case-insensitive), `T<id>`, `topic <id>`, or a bare id.
pub fn resolve_topic(reference: &Value, labels: &[String]) -> Result<TopicId, ParseError> {
    let k = labels.len();
    let id = match reference {
        Value::Number(n) => n.as_u64().map(|v| v as usize),
        Value::String(s) => {
            let norm = s.trim().to_lowercase();
            if let Some(pos) = labels.iter().position(|l| l.trim().to_lowercase() == norm) {
                return Ok(pos);
            }
            let digits = norm
                .strip_prefix("topic")
                .or_else(|| norm.strip_prefix('t'))
                .unwrap_or(&norm)
                .trim();
            digits.parse::<usize>().ok()
        }
        _ => None,
    };
    match id {
        Some(t) if t < k => Ok(t),
        _ => fail(format!("unknown topic {reference}")),
    }
}

pub fn parse_structured(reply: &str, schema: &Schema) -> Result<Structured, ParseError> {
    let Some(obj) = extract_object(reply) else {
        return fail("no JSON object in reply");
    };
    match schema {
        Schema::Decision => {
            let Some(raw) = text_field(&obj, "decision")? else {
                return fail("missing `decision`");
            };
            let accept = match raw.to_lowercase().as_str() {
                "yes" => true,
                "no" => false,
                other => return fail(format!("decision must be yes or no, got `{other}`")),
            };
            let reason = text_field(&obj, "reason")?.filter(|r| !r.is_empty());
            Ok(Structured::Decision { accept, reason })
        }
        Schema::TopicChoice { labels } => {
            let Some(reference) = obj.get("topic") else {
                return fail("missing `topic`");
            };
            Ok(Structured::Topic(resolve_topic(reference, labels)?))
        }
        Schema::Belief { labels } => {
            let Some(v) = obj.get("new_belief") else {
                return fail("missing `new_belief`");
            };
            let new_belief = belief_value(v, "new_belief")?;
            let reason = match text_field(&obj, "reason")? {
                Some(r) if !r.is_empty() => r,
                _ => return fail("missing or empty `reason`"),
            };
            let mut related = Vec::new();
            match obj.get("related") {
                None | Some(Value::Null) => {}
                Some(Value::Object(map)) => {
                    for (key, value) in map {
                        let topic = resolve_topic(&Value::String(key.clone()), labels)?;
                        related.push((topic, belief_value(value, "related belief")?));
                    }
                    related.sort_by_key(|r| r.0);
                }
                Some(other) => return fail(format!("`related` must be an object, got {other}")),
            }
            Ok(Structured::Belief {
                new_belief,
                reason,
                related,
            })
        }
        Schema::Summary => match text_field(&obj, "summary")? {
            Some(s) if !s.is_empty() => Ok(Structured::Summary(s)),
            _ => fail("missing or empty `summary`"),
        },
    }
}
