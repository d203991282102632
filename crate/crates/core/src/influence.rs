//! Influence ranking (ArticleRank) and label-propagation communities.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, TradeGraph};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("damping factor must lie in [0, 1], got {0}")]
    InvalidDamping(f64),
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticleRankConfig {
    pub damping: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ArticleRankConfig {
    fn default() -> Self {
        ArticleRankConfig { damping: 0.85, max_iterations: 100, tolerance: 1e-7 }
    }
}

impl ArticleRankConfig {
    pub fn validate(&self) -> Result<(), InfluenceError> {
        if !(0.0..=1.0).contains(&self.damping) {
            return Err(InfluenceError::InvalidDamping(self.damping));
        }
        if !(self.tolerance > 0.0) {
            return Err(InfluenceError::InvalidTolerance(self.tolerance));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InfluenceScores {
    /// Score per node id.
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Mean out-degree of the deduplicated graph, added to every denominator.
    pub mean_out_degree: f64,
}

const PARALLEL_THRESHOLD: usize = 4096;

/// ArticleRank on the deduplicated directed graph.
///
/// Every node starts at 1.0; an iteration sets
/// `score(v) = (1 - d) + d * Σ_{w → v} score(w) / (outdeg(w) + mean_outdeg)`.
/// Iteration stops once the largest per-node change drops below the tolerance.
/// Nodes without out-links never appear in a sum, so no dangling-mass step exists.
pub fn article_rank(graph: &TradeGraph, config: &ArticleRankConfig) -> Result<InfluenceScores, InfluenceError> {
    config.validate()?;
    let g = graph.simple_directed();
    let n = g.node_count();
    let mean_out_degree = if n == 0 { 0.0 } else { g.edge_count() as f64 / n as f64 };
    let d = config.damping;
    let share: Vec<f64> = (0..n).map(|w| 1.0 / (g.out(w).len() as f64 + mean_out_degree)).collect();

    let mut prev = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let update = |v: usize, prev: &[f64]| -> f64 {
        let sum: f64 = g.inn(v).iter().map(|&w| prev[w as usize] * share[w as usize]).sum();
        (1.0 - d) + d * sum
    };
    while iterations < config.max_iterations {
        iterations += 1;
        if n >= PARALLEL_THRESHOLD {
            next.par_iter_mut().enumerate().for_each(|(v, out)| *out = update(v, &prev));
        } else {
            for (v, out) in next.iter_mut().enumerate() {
                *out = update(v, &prev);
            }
        }
        let delta = prev.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut prev, &mut next);
        if delta < config.tolerance {
            converged = true;
            break;
        }
    }
    Ok(InfluenceScores { scores: prev, iterations, converged, mean_out_degree })
}

/// The `k` highest-scoring addresses, ties by address ascending.
pub fn top_influencers(graph: &TradeGraph, scores: &InfluenceScores, k: usize) -> Vec<(String, f64)> {
    let mut rows: Vec<(NodeId, f64)> = graph.nodes().map(|v| (v, scores.scores[v.index()])).collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| graph.address(a.0).cmp(graph.address(b.0))));
    rows.into_iter().take(k).map(|(v, s)| (graph.address(v).to_string(), s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CommunityAssignment {
    /// Community id per node id, contiguous from 0 in order of first appearance.
    pub labels: Vec<usize>,
    pub community_count: usize,
    pub modularity: f64,
    pub sweeps: usize,
}

impl CommunityAssignment {
    /// Community sizes indexed by community id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.community_count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

const MAX_SWEEPS: usize = 100;

/// Seeded asynchronous label propagation on the undirected simplification,
/// weighting each neighbour by edge multiplicity.
///
/// Nodes are visited in a freshly shuffled order every sweep. A node adopts the
/// label with the largest incident weight; it keeps its own label when that is
/// among the maxima and otherwise picks uniformly among them. Stops after a
/// sweep with no change.
pub fn detect_communities(graph: &TradeGraph, seed: u64) -> CommunityAssignment {
    let g = graph.undirected();
    let n = g.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<usize> = (0..n).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut weight_of = vec![0.0f64; n];
    let mut touched: Vec<usize> = Vec::new();
    let mut best: Vec<usize> = Vec::new();
    let mut sweeps = 0;

    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        order.shuffle(&mut rng);
        let mut changed = false;
        for &u in &order {
            if g.degree(u) == 0 {
                continue;
            }
            for (&v, &w) in g.neighbors(u).iter().zip(g.weights(u)) {
                let l = labels[v as usize];
                if weight_of[l] == 0.0 {
                    touched.push(l);
                }
                weight_of[l] += w;
            }
            let max = touched.iter().map(|&l| weight_of[l]).fold(f64::MIN, f64::max);
            best.clear();
            best.extend(touched.iter().copied().filter(|&l| weight_of[l] == max));
            best.sort_unstable();
            for &l in &touched {
                weight_of[l] = 0.0;
            }
            touched.clear();

            if !best.contains(&labels[u]) {
                labels[u] = best[rng.random_range(0..best.len())];
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut remap = vec![usize::MAX; n];
    let mut next = 0;
    for l in labels.iter_mut() {
        if remap[*l] == usize::MAX {
            remap[*l] = next;
            next += 1;
        }
        *l = remap[*l];
    }
    let modularity = modularity(graph, &labels);
    CommunityAssignment { labels, community_count: next, modularity, sweeps }
}

/// Newman modularity of a partition of the undirected simplification, with
/// parallel-edge multiplicity as weight. Zero for an edgeless graph.
pub fn modularity(graph: &TradeGraph, labels: &[usize]) -> f64 {
    let g = graph.undirected();
    let communities = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut internal = vec![0.0; communities];
    let mut strength = vec![0.0; communities];
    let mut total = 0.0;
    for u in 0..g.node_count() {
        for (&v, &w) in g.neighbors(u).iter().zip(g.weights(u)) {
            strength[labels[u]] += w;
            total += w;
            if labels[v as usize] == labels[u] {
                internal[labels[u]] += w;
            }
        }
    }
    // Each undirected edge was visited from both ends.
    if total == 0.0 {
        return 0.0;
    }
    internal.iter().zip(&strength).map(|(&l, &k)| l / total - (k / total).powi(2)).sum()
}
