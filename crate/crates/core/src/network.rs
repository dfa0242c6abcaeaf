//! Static undirected interaction graph.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SimRng;
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    adjacency: Vec<Vec<AgentId>>,
    /// `weights[i][p]` belongs to the edge `(i, adjacency[i][p])`.
    weights: Vec<Vec<f64>>,
}

impl SocialGraph {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        SocialGraph {
            adjacency: vec![Vec::new(); n],
            weights: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an edge list. Rejects self-loops, duplicates, unknown nodes and
    /// non-positive weights.
    pub fn from_edges(n: usize, edges: &[(AgentId, AgentId, f64)]) -> Result<Self> {
        let mut g = SocialGraph::empty(n);
        for &(a, b, w) in edges {
            g.add_edge(a, b, w)?;
        }
        g.sort();
        Ok(g)
    }

    fn add_edge(&mut self, a: AgentId, b: AgentId, w: f64) -> Result<()> {
        let n = self.len();
        if a >= n || b >= n {
            return Err(Error::Graph(format!("edge ({a}, {b}) outside {n} nodes")));
        }
        if a == b {
            return Err(Error::Graph(format!("self-loop on node {a}")));
        }
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Graph(format!("edge ({a}, {b}) has non-positive weight {w}")));
        }
        if self.adjacency[a].contains(&b) {
            return Err(Error::Graph(format!("duplicate edge ({a}, {b})")));
        }
        self.adjacency[a].push(b);
        self.weights[a].push(w);
        self.adjacency[b].push(a);
        self.weights[b].push(w);
        Ok(())
    }

    fn sort(&mut self) {
        for (adj, ws) in self.adjacency.iter_mut().zip(self.weights.iter_mut()) {
            let mut pairs: Vec<(AgentId, f64)> = adj.iter().copied().zip(ws.iter().copied()).collect();
            pairs.sort_by_key(|p| p.0);
            *adj = pairs.iter().map(|p| p.0).collect();
            *ws = pairs.iter().map(|p| p.1).collect();
        }
    }

    pub fn len(&self) -> usize {
        self.adjacency.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    /// Neighbors of `i`, ascending.
    pub fn neighbors(&self, i: AgentId) -> Result<&[AgentId]> {
        self.adjacency
            .get(i)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Graph(format!("unknown node {i}")))
    }

    /// Neighbors of `i` paired with edge weights. Panics on an unknown id.
    pub fn weighted_neighbors(&self, i: AgentId) -> impl Iterator<Item = (AgentId, f64)> + '_ {
        self.adjacency[i]
            .iter()
            .copied()
            .zip(self.weights[i].iter().copied())
    }

    pub fn degree(&self, i: AgentId) -> usize {
        self.adjacency[i].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(i, j, w)` with `i < j`, in ascending order.
    pub fn edges(&self) -> Vec<(AgentId, AgentId, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for i in 0..self.len() {
            for (j, w) in self.weighted_neighbors(i) {
                if i < j {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    pub fn set_uniform_weight(&mut self, w: f64) {
        for ws in &mut self.weights {
            ws.iter_mut().for_each(|x| *x = w);
        }
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let mut seen = vec![false; self.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(i) = stack.pop() {
            for &j in &self.adjacency[i] {
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// `i j w` per line, preceded by a `# nodes <n>` header.
    pub fn to_edge_list(&self, header: &str) -> String {
        let mut out = String::new();
        if !header.is_empty() {
            for line in header.lines() {
                let _ = writeln!(out, "# {line}");
            }
        }
        let _ = writeln!(out, "# nodes {}", self.len());
        for (i, j, w) in self.edges() {
            let _ = writeln!(out, "{i} {j} {w}");
        }
        out
    }

    /// Parses the format written by [`SocialGraph::to_edge_list`]. Without a `# nodes` header
    /// the node count is one past the largest id seen. A missing weight column means 1.0.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(n) = comment.trim().strip_prefix("nodes") {
                    declared = Some(n.trim().parse::<usize>().map_err(|e| {
                        Error::Graph(format!("line {}: bad node count: {e}", lineno + 1))
                    })?);
                }
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |what: &str| Error::Graph(format!("line {}: {what}: `{line}`", lineno + 1));
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad("expected `i j [w]`"));
            }
            let a = fields[0].parse::<AgentId>().map_err(|_| bad("bad node id"))?;
            let b = fields[1].parse::<AgentId>().map_err(|_| bad("bad node id"))?;
            let w = match fields.get(2) {
                Some(s) => s.parse::<f64>().map_err(|_| bad("bad weight"))?,
                None => 1.0,
            };
            edges.push((a, b, w));
        }
        let n = declared.unwrap_or_else(|| {
            edges
                .iter()
                .map(|&(a, b, _)| a.max(b) + 1)
                .max()
                .unwrap_or(0)
        });
        SocialGraph::from_edges(n, &edges)
    }
}

/// Preferential-attachment graph: a complete seed graph on `m + 1` nodes, then every further
/// node links to `m` distinct existing nodes drawn with probability proportional to degree.
pub fn generate_scale_free(n: usize, m: usize, rng: &mut SimRng) -> Result<SocialGraph> {
    if m == 0 || m >= n {
        return Err(Error::Graph(format!(
            "preferential attachment needs 1 <= m < n, got n={n}, m={m}"
        )));
    }
    let mut g = SocialGraph::empty(n);
    // One entry per edge endpoint, so a uniform pick is degree-proportional.
    let mut endpoints: Vec<AgentId> = Vec::with_capacity(2 * m * n);
    for a in 0..=m {
        for b in (a + 1)..=m {
            g.add_edge(a, b, 1.0)?;
            endpoints.push(a);
            endpoints.push(b);
        }
    }
    let mut targets = Vec::with_capacity(m);
    for new in (m + 1)..n {
        targets.clear();
        while targets.len() < m {
            let pick = endpoints[rng.random_range(0..endpoints.len())];
            if !targets.contains(&pick) {
                targets.push(pick);
            }
        }
        for &t in &targets {
            g.add_edge(new, t, 1.0)?;
            endpoints.push(new);
            endpoints.push(t);
        }
    }
    g.sort();
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn triangle() -> SocialGraph {
        SocialGraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
    }

    #[test]
    fn ba_basic_guarantees() {
        let g = generate_scale_free(50, 2, &mut seeded(50)).unwrap();
        assert_eq!(g.len(), 50);
        assert!(g.is_connected());
        assert!((0..50).all(|i| g.degree(i) >= 2));
        // seed triangle + 47 nodes * 2 edges
        assert_eq!(g.edge_count(), 3 + 47 * 2);
        let degree_sum: usize = (0..50).map(|i| g.degree(i)).sum();
        assert_eq!(degree_sum, 2 * g.edge_count());
    }

    #[test]
    fn ba_three_nodes_is_triangle() {
        let g = generate_scale_free(3, 2, &mut seeded(1)).unwrap();
        assert_eq!(g, triangle());
    }

    #[test]
    fn ba_rejects_bad_parameters() {
        assert!(generate_scale_free(5, 0, &mut seeded(1)).is_err());
        assert!(generate_scale_free(2, 2, &mut seeded(1)).is_err());
        assert!(generate_scale_free(1, 1, &mut seeded(1)).is_err());
    }

    #[test]
    fn ba_heavy_tail_over_seeds() {
        let mut hits = 0;
        for seed in 0..100 {
            let g = generate_scale_free(50, 2, &mut seeded(seed)).unwrap();
            let mut degrees: Vec<usize> = (0..50).map(|i| g.degree(i)).collect();
            degrees.sort_unstable();
            let median = (degrees[24] + degrees[25]) as f64 / 2.0;
            if *degrees.last().unwrap() as f64 > median {
                hits += 1;
            }
        }
        assert!(hits >= 95, "heavy tail in only {hits}/100 graphs");
    }

    #[test]
    fn ba_is_deterministic() {
        let a = generate_scale_free(50, 2, &mut seeded(50)).unwrap();
        let b = generate_scale_free(50, 2, &mut seeded(50)).unwrap();
        assert_eq!(a.neighbors(0).unwrap(), b.neighbors(0).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn neighbor_queries() {
        let t = triangle();
        assert_eq!(t.neighbors(0).unwrap(), &[1, 2]);
        let pair = SocialGraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(pair.neighbors(1).unwrap(), &[0]);
        assert!(pair.neighbors(2).is_err());
    }

    #[test]
    fn adjacency_is_symmetric_and_sorted() {
        let g = generate_scale_free(40, 3, &mut seeded(9)).unwrap();
        for i in 0..g.len() {
            let ns = g.neighbors(i).unwrap();
            assert!(ns.windows(2).all(|w| w[0] < w[1]));
            assert!(!ns.contains(&i));
            for &j in ns {
                assert!(g.neighbors(j).unwrap().contains(&i));
            }
        }
    }

    #[test]
    fn edge_list_round_trip() {
        let mut g = generate_scale_free(20, 2, &mut seeded(4)).unwrap();
        g.set_uniform_weight(0.5);
        let text = g.to_edge_list("seed=4");
        assert!(text.starts_with("# seed=4\n# nodes 20\n"));
        assert_eq!(SocialGraph::from_edge_list(&text).unwrap(), g);
    }

    #[test]
    fn edge_list_rejects_garbage() {
        assert!(SocialGraph::from_edge_list("0 0 1").is_err());
        assert!(SocialGraph::from_edge_list("0 1 -1").is_err());
        assert!(SocialGraph::from_edge_list("0 1\n1 0").is_err());
        assert!(SocialGraph::from_edge_list("0 x").is_err());
        let g = SocialGraph::from_edge_list("# nodes 4\n0 1\n").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g.degree(3), 0);
    }
}
