//! PageRank over a reply tree with its zero-out-degree nodes removed.
//!
//! In a reply tree every edge eventually points at the root, so plain
//! PageRank concentrates mass there. Removing the nodes without outgoing
//! edges (once, on the original graph) leaves the replies and ranks posts
//! by how much discussion they attract.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ThreadGraph;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostRankConfig {
    pub damping: f64,
    /// L1 change between iterations below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PostRankConfig {
    fn default() -> Self {
        Self {
            damping: 0.85,
            tol: 1e-9,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostRankResult {
    pub scores: BTreeMap<String, f64>,
    pub removed_ids: BTreeSet<String>,
    pub damping: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PostRankResult {
    /// Post ids by descending score, ties by id.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut r: Vec<(&str, f64)> = self.scores.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        r.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        r
    }
}

/// Power iteration with uniform teleport; mass on dangling nodes is spread
/// uniformly. A single-post thread yields no scores.
pub fn postrank(graph: &ThreadGraph, config: &PostRankConfig) -> PostRankResult {
    let removed: Vec<usize> = (0..graph.len())
        .filter(|&v| graph.out_degree(v) == 0)
        .collect();
    let removed_ids = removed.iter().map(|&v| graph.nodes()[v].clone()).collect();

    let mut local = vec![usize::MAX; graph.len()];
    let kept: Vec<usize> = (0..graph.len())
        .filter(|&v| graph.out_degree(v) > 0)
        .collect();
    for (i, &v) in kept.iter().enumerate() {
        local[v] = i;
    }
    // out-degree is at most 1 in a tree: target in the reduced graph, if any
    let target: Vec<Option<usize>> = kept
        .iter()
        .map(|&v| {
            graph
                .parent_of(v)
                .map(|p| local[p])
                .filter(|&p| p != usize::MAX)
        })
        .collect();

    let n = kept.len();
    let d = config.damping;
    let mut result = PostRankResult {
        scores: BTreeMap::new(),
        removed_ids,
        damping: d,
        iterations: 0,
        converged: true,
    };
    if n == 0 {
        return result;
    }

    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    result.converged = false;
    for iter in 1..=config.max_iter {
        let dangling: f64 = (0..n)
            .filter(|&u| target[u].is_none())
            .map(|u| rank[u])
            .sum();
        let base = (1.0 - d) / nf + d * dangling / nf;
        next.iter_mut().for_each(|x| *x = base);
        for u in 0..n {
            if let Some(v) = target[u] {
                next[v] += d * rank[u];
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|x| *x /= total);
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        result.iterations = iter;
        if delta < config.tol {
            result.converged = true;
            break;
        }
    }
    result.scores = kept
        .iter()
        .zip(rank)
        .map(|(&v, s)| (graph.nodes()[v].clone(), s))
        .collect();
    result
}
