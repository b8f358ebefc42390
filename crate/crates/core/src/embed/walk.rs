//! Second-order biased random walks (Node2Vec and the weight-aware
//! Node2Vec+ variant) over the positive edges of a [`ZooGraph`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::WalkConfig;
use crate::error::{Error, Result};
use crate::zoograph::{EdgeKind, EdgeLabel, ZooGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WalkVariant {
    Node2vec,
    Node2vecPlus,
}

/// The current node has no out-edge with positive weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeadEnd;

pub type Walk = Vec<usize>;

/// Directed weighted adjacency used by the walker. Neighbor lists are sorted
/// by node index.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkGraph {
    adj: Vec<Vec<(usize, f64)>>,
}

impl WalkGraph {
    /// Builds the walk structure from positive edges. Dataset-dataset weights
    /// are mapped from `[−1, 1]` to `[0, 1]` by `(w + 1) / 2`; model-dataset
    /// edges are walkable in both directions. Parallel edges keep the larger
    /// walk weight.
    pub fn from_graph(graph: &ZooGraph) -> Self {
        let mut directed = Vec::new();
        for e in graph.edges().iter().filter(|e| e.label == EdgeLabel::Positive) {
            let a = graph.node_index(&e.a).expect("endpoint indexed");
            let b = graph.node_index(&e.b).expect("endpoint indexed");
            match e.kind {
                EdgeKind::DdSimilarity => directed.push((a, b, (e.weight + 1.0) / 2.0)),
                _ => {
                    directed.push((a, b, e.weight));
                    directed.push((b, a, e.weight));
                }
            }
        }
        Self::from_directed(graph.nodes().len(), &directed)
    }

    /// Adjacency from directed `(from, to, weight)` triples.
    pub fn from_directed(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(a, b, w) in edges {
            match adj[a].iter_mut().find(|(x, _)| *x == b) {
                Some(slot) => slot.1 = slot.1.max(w),
                None => adj[a].push((b, w)),
            }
        }
        for list in &mut adj {
            list.sort_by_key(|&(x, _)| x);
        }
        Self { adj }
    }

    /// Undirected adjacency: each pair is added in both directions.
    pub fn from_undirected(n: usize, edges: &[(usize, usize, f64)]) -> Self {
        let both: Vec<_> = edges.iter().flat_map(|&(a, b, w)| [(a, b, w), (b, a, w)]).collect();
        Self::from_directed(n, &both)
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adj[v]
    }

    pub fn weight(&self, from: usize, to: usize) -> Option<f64> {
        self.adj[from]
            .binary_search_by_key(&to, |&(x, _)| x)
            .ok()
            .map(|i| self.adj[from][i].1)
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    fn usable(&self, v: usize) -> bool {
        self.adj[v].iter().any(|&(_, w)| w > 0.0)
    }

    fn mean_out_weight(&self, v: usize) -> f64 {
        let n = self.adj[v].len();
        if n == 0 {
            0.0
        } else {
            self.adj[v].iter().map(|&(_, w)| w).sum::<f64>() / n as f64
        }
    }
}

/// Unnormalized weights for the step out of `current`, having arrived from
/// `prev`. Each neighbor `x` gets its edge weight times the search bias:
/// `1/p` when `x = prev`, `1` when `x` is adjacent to `prev`, `1/q`
/// otherwise. Node2Vec+ counts `x` as adjacent to `prev` only when
/// `w(prev, x)` reaches the mean out-weight of `prev`.
pub fn transition_weights(
    graph: &WalkGraph,
    prev: Option<usize>,
    current: usize,
    p: f64,
    q: f64,
    variant: WalkVariant,
) -> std::result::Result<Vec<(usize, f64)>, DeadEnd> {
    if !graph.usable(current) {
        return Err(DeadEnd);
    }
    let Some(t) = prev else {
        return Ok(graph.neighbors(current).to_vec());
    };
    let t_mean = graph.mean_out_weight(t);
    Ok(graph
        .neighbors(current)
        .iter()
        .map(|&(x, w)| {
            let bias = if x == t {
                1.0 / p
            } else {
                match (graph.weight(t, x), variant) {
                    (Some(_), WalkVariant::Node2vec) => 1.0,
                    (Some(wtx), WalkVariant::Node2vecPlus) if wtx >= t_mean => 1.0,
                    _ => 1.0 / q,
                }
            };
            (x, bias * w)
        })
        .collect())
}

/// Normalizes weights to probabilities, preserving neighbor order.
pub fn normalize(weights: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    weights.iter().map(|&(x, w)| (x, w / total)).collect()
}

/// Draws one neighbor proportionally to its weight.
pub fn sample_next<R: Rng>(rng: &mut R, weights: &[(usize, f64)]) -> usize {
    let total: f64 = weights.iter().map(|&(_, w)| w).sum();
    let mut u = rng.random::<f64>() * total;
    for &(x, w) in weights {
        if u < w {
            return x;
        }
        u -= w;
    }
    // Round-off fallthrough: last neighbor with positive weight.
    weights.iter().rev().find(|&&(_, w)| w > 0.0).map(|&(x, _)| x).expect("positive total")
}

/// RNG for the walks rooted at `node`; independent of scheduling.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node as u64);
    rng
}

/// `walks_per_node` walks from every node with a usable out-edge, grouped by
/// start node in index order.
pub fn sample_walks(graph: &WalkGraph, config: &WalkConfig, variant: WalkVariant) -> Result<Vec<Walk>> {
    config.validate()?;
    if (0..graph.len()).all(|v| !graph.usable(v)) {
        return Err(Error::EmptyGraph);
    }
    let per_node: Vec<Vec<Walk>> = (0..graph.len())
        .into_par_iter()
        .map(|start| {
            if !graph.usable(start) {
                return Vec::new();
            }
            let mut rng = node_rng(config.seed, start);
            (0..config.walks_per_node)
                .map(|_| walk_from(graph, start, config, variant, &mut rng))
                .collect()
        })
        .collect();
    Ok(per_node.into_iter().flatten().collect())
}

fn walk_from<R: Rng>(graph: &WalkGraph, start: usize, config: &WalkConfig, variant: WalkVariant, rng: &mut R) -> Walk {
    let mut walk = Vec::with_capacity(config.walk_length);
    walk.push(start);
    while walk.len() < config.walk_length {
        let cur = walk[walk.len() - 1];
        let prev = walk.len().checked_sub(2).map(|i| walk[i]);
        match transition_weights(graph, prev, cur, config.p, config.q, variant) {
            Ok(w) => walk.push(sample_next(rng, &w)),
            Err(DeadEnd) => break,
        }
    }
    walk
}
