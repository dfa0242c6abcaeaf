//! Echo-chamber metrics over one topic's beliefs on the social graph.
//!
//! Agents without neighbors are left out of neighborhood averages (NCI, ECI, Mean-NCI) and
//! contribute zero to global disagreement.

use serde::{Deserialize, Serialize};

use crate::agent::AgentState;
use crate::error::{Error, Result};
use crate::network::SocialGraph;

fn isolated_note(graph: &SocialGraph) {
    let isolated = (0..graph.len()).filter(|&i| graph.degree(i) == 0).count();
    if isolated > 0 {
        log::debug!("{isolated} isolated agent(s) excluded from neighborhood metrics");
    }
}

/// Mean share of neighbors whose belief is strictly within `epsilon`.
pub fn nci_threshold(beliefs: &[f64], graph: &SocialGraph, epsilon: f64) -> Option<f64> {
    isolated_note(graph);
    neighborhood_average(beliefs, graph, |vi, vj| {
        if (vi - vj).abs() < epsilon {
            1.0
        } else {
            0.0
        }
    })
}

/// Mean neighbor similarity `1 - |gap| / 4`.
pub fn eci(beliefs: &[f64], graph: &SocialGraph) -> Option<f64> {
    isolated_note(graph);
    neighborhood_average(beliefs, graph, |vi, vj| 1.0 - (vi - vj).abs() / 4.0)
}

fn neighborhood_average(
    beliefs: &[f64],
    graph: &SocialGraph,
    score: impl Fn(f64, f64) -> f64,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut counted = 0usize;
    for i in 0..graph.len() {
        let deg = graph.degree(i);
        if deg == 0 {
            continue;
        }
        let local: f64 = graph
            .weighted_neighbors(i)
            .map(|(j, _)| score(beliefs[i], beliefs[j]))
            .sum();
        sum += local / deg as f64;
        counted += 1;
    }
    (counted > 0).then(|| sum / counted as f64)
}

/// Population variance.
pub fn polarization(beliefs: &[f64]) -> f64 {
    if beliefs.windows(2).all(|w| w[0] == w[1]) {
        return 0.0;
    }
    let n = beliefs.len() as f64;
    let mean = beliefs.iter().sum::<f64>() / n;
    beliefs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Weighted mean squared neighbor gap, halved: `(1/2N) sum_i (1/|M(i)|) sum_j w_ij (v_i - v_j)^2`.
pub fn global_disagreement(beliefs: &[f64], graph: &SocialGraph) -> f64 {
    let n = graph.len();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let deg = graph.degree(i);
        if deg == 0 {
            continue;
        }
        let local: f64 = graph
            .weighted_neighbors(i)
            .map(|(j, w)| w * (beliefs[i] - beliefs[j]).powi(2))
            .sum();
        total += local / deg as f64;
    }
    total / (2.0 * n as f64)
}

/// Pearson correlation between each agent's belief and its unweighted neighborhood mean.
/// `None` when fewer than two agents have neighbors or either side has zero variance.
pub fn mean_nci(beliefs: &[f64], graph: &SocialGraph) -> Option<f64> {
    let mut own = Vec::with_capacity(graph.len());
    let mut around = Vec::with_capacity(graph.len());
    for i in 0..graph.len() {
        let deg = graph.degree(i);
        if deg == 0 {
            continue;
        }
        let m = graph.weighted_neighbors(i).map(|(j, _)| beliefs[j]).sum::<f64>() / deg as f64;
        own.push(beliefs[i]);
        around.push(m);
    }
    pearson(&own, &around)
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // all-equal inputs leave rounding residue, not variance
    let floor = nf * 1e-24;
    if sxx <= floor || syy <= floor {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopicMetrics {
    pub nci: Option<f64>,
    pub eci: Option<f64>,
    pub polarization: f64,
    pub global_disagreement: f64,
    pub mean_nci: Option<f64>,
}

impl TopicMetrics {
    pub fn compute(beliefs: &[f64], graph: &SocialGraph, epsilon: f64) -> Self {
        TopicMetrics {
            nci: nci_threshold(beliefs, graph, epsilon),
            eci: eci(beliefs, graph),
            polarization: polarization(beliefs),
            global_disagreement: global_disagreement(beliefs, graph),
            mean_nci: mean_nci(beliefs, graph),
        }
    }

    /// Component-wise mean; an optional field is `None` if any input lacks it.
    pub fn average(items: &[TopicMetrics]) -> Self {
        let n = items.len() as f64;
        let opt_mean = |f: fn(&TopicMetrics) -> Option<f64>| {
            items
                .iter()
                .map(f)
                .collect::<Option<Vec<f64>>>()
                .map(|v| v.iter().sum::<f64>() / n)
        };
        TopicMetrics {
            nci: opt_mean(|m| m.nci),
            eci: opt_mean(|m| m.eci),
            polarization: items.iter().map(|m| m.polarization).sum::<f64>() / n,
            global_disagreement: items.iter().map(|m| m.global_disagreement).sum::<f64>() / n,
            mean_nci: opt_mean(|m| m.mean_nci),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub polarization: f64,
    pub global_disagreement: f64,
    pub mean_nci: Option<f64>,
}

impl Deltas {
    pub fn between(current: &TopicMetrics, baseline: &TopicMetrics) -> Self {
        Deltas {
            polarization: current.polarization - baseline.polarization,
            global_disagreement: current.global_disagreement - baseline.global_disagreement,
            mean_nci: current.mean_nci.zip(baseline.mean_nci).map(|(c, b)| c - b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub round: u32,
    pub per_topic: Vec<TopicMetrics>,
    /// Across-topic mean of `per_topic`.
    pub mean: TopicMetrics,
}

impl MetricsSnapshot {
    pub fn compute(round: u32, agents: &[AgentState], graph: &SocialGraph, epsilon: f64) -> Self {
        let k = agents.first().map_or(0, |a| a.beliefs.len());
        let per_topic: Vec<TopicMetrics> = (0..k)
            .map(|t| {
                let column: Vec<f64> = agents.iter().map(|a| a.beliefs.get(t)).collect();
                TopicMetrics::compute(&column, graph, epsilon)
            })
            .collect();
        let mean = TopicMetrics::average(&per_topic);
        MetricsSnapshot {
            round,
            per_topic,
            mean,
        }
    }

    /// Computes directly from a `beliefs[agent][topic]` table.
    pub fn from_table(round: u32, table: &[Vec<f64>], graph: &SocialGraph, epsilon: f64) -> Self {
        let k = table.first().map_or(0, Vec::len);
        let per_topic: Vec<TopicMetrics> = (0..k)
            .map(|t| {
                let column: Vec<f64> = table.iter().map(|row| row[t]).collect();
                TopicMetrics::compute(&column, graph, epsilon)
            })
            .collect();
        let mean = TopicMetrics::average(&per_topic);
        MetricsSnapshot {
            round,
            per_topic,
            mean,
        }
    }
}

/// Per-topic and across-topic deltas of `current` against `baseline`.
pub fn deltas(current: &MetricsSnapshot, baseline: &MetricsSnapshot) -> Result<(Vec<Deltas>, Deltas)> {
    if current.per_topic.len() != baseline.per_topic.len() {
        return Err(Error::Metrics(format!(
            "baseline has {} topics, snapshot has {}",
            baseline.per_topic.len(),
            current.per_topic.len()
        )));
    }
    let per_topic = current
        .per_topic
        .iter()
        .zip(&baseline.per_topic)
        .map(|(c, b)| Deltas::between(c, b))
        .collect();
    Ok((per_topic, Deltas::between(&current.mean, &baseline.mean)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair() -> SocialGraph {
        SocialGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn triangle() -> SocialGraph {
        SocialGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    fn cycle4() -> SocialGraph {
        SocialGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0), (3, 0, 1.0)]).unwrap()
    }

    #[test]
    fn nci_examples() {
        assert_eq!(nci_threshold(&[0.3, 0.3, 0.3], &triangle(), 0.1), Some(1.0));
        assert_eq!(nci_threshold(&[2.0, -2.0], &pair(), 0.1), Some(0.0));
        let v = nci_threshold(&[0.0, 0.05, 0.5], &triangle(), 0.1).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn eci_examples() {
        assert_eq!(eci(&[1.0, 1.0, 1.0], &triangle()), Some(1.0));
        assert_eq!(eci(&[2.0, -2.0], &pair()), Some(0.0));
        assert_eq!(eci(&[1.0, -1.0], &pair()), Some(0.5));
    }

    #[test]
    fn polarization_examples() {
        assert_eq!(polarization(&[0.7, 0.7, 0.7]), 0.0);
        assert_eq!(polarization(&[2.0, 2.0, -2.0, -2.0]), 4.0);
        assert_eq!(polarization(&[2.0, -2.0]), 4.0);
    }

    #[test]
    fn gd_examples() {
        assert_eq!(global_disagreement(&[1.0, 1.0, 1.0], &triangle()), 0.0);
        assert_eq!(global_disagreement(&[2.0, -2.0], &pair()), 8.0);
        let beliefs = [0.3, -1.2, 1.9];
        let mut heavy = triangle();
        heavy.set_uniform_weight(2.0);
        let base = global_disagreement(&beliefs, &triangle());
        assert!((global_disagreement(&beliefs, &heavy) - 2.0 * base).abs() < 1e-12);
    }

    #[test]
    fn mean_nci_examples() {
        let v = mean_nci(&[1.0, -1.0, 1.0, -1.0], &cycle4()).unwrap();
        assert!((v + 1.0).abs() < 1e-15);
        assert_eq!(mean_nci(&[0.4; 4], &cycle4()), None);
        // neighborhood mean equals own value on every node: two disjoint equal-valued pairs
        let g = SocialGraph::from_edges(4, &[(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let v = mean_nci(&[1.5, 1.5, -0.5, -0.5], &g).unwrap();
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_agents_are_excluded() {
        let g = SocialGraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(eci(&[1.0, -1.0, 2.0], &g), Some(0.5));
        assert_eq!(nci_threshold(&[1.0, 1.0, -2.0], &g, 0.1), Some(1.0));
        // isolated node still counts in N
        assert!((global_disagreement(&[1.0, -1.0, 2.0], &g) - 8.0 / 6.0).abs() < 1e-15);
        let lonely = SocialGraph::empty(1);
        assert_eq!(eci(&[1.0], &lonely), None);
        assert_eq!(nci_threshold(&[1.0], &lonely, 0.1), None);
        assert_eq!(mean_nci(&[1.0], &lonely), None);
    }

    #[test]
    fn delta_rules() {
        let table = vec![vec![2.0], vec![-2.0], vec![2.0], vec![-2.0]];
        let base = MetricsSnapshot::from_table(0, &table, &cycle4(), 0.1);
        let (per, mean) = deltas(&base, &base).unwrap();
        assert_eq!(per[0].polarization, 0.0);
        assert_eq!(per[0].global_disagreement, 0.0);
        assert_eq!(per[0].mean_nci, Some(0.0));
        assert_eq!(mean.polarization, 0.0);

        let mut p0 = base.per_topic[0];
        p0.polarization = 4.0;
        let mut pt = p0;
        pt.polarization = 2.43;
        assert!((Deltas::between(&pt, &p0).polarization + 1.57).abs() < 1e-12);

        let flat = MetricsSnapshot::from_table(3, &vec![vec![0.5]; 4], &cycle4(), 0.1);
        let (per, _) = deltas(&flat, &base).unwrap();
        assert_eq!(per[0].mean_nci, None);

        let wide = MetricsSnapshot::from_table(0, &vec![vec![0.0, 1.0]; 4], &cycle4(), 0.1);
        assert!(deltas(&wide, &base).is_err());
    }
}
