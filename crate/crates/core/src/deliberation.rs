//! Deliberation Intensity Score.
//!
//! For a thread with `P` posts, `A` argumentative posts and `C` argument
//! clusters:
//!
//! ```text
//! D_cluster = C / A            (0 when A = 0)
//! D_arg     = A / P
//! a1 = 1 / (1 + e^-A)          a2 = 1 / (1 + e^-P)
//! s1 = a1 / (a1 + a2)          s2 = a2 / (a1 + a2)
//! DIS = s1 * D_cluster + s2 * D_arg
//! ```
//!
//! Both logistic weights saturate quickly: once `A` and `P` reach 5 the two
//! weights are within 0.004 of one half.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backends::ArgumentLabel;
use crate::clustering::{effective_cluster_count, ClusterSet};
use crate::error::{Error, Result};
use crate::relevance::ThreadSubset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliberationProfile {
    pub thread_id: String,
    pub n_posts: usize,
    pub n_arguments: usize,
    pub n_clusters: usize,
    pub d_cluster: f64,
    pub d_arg: f64,
    pub a1: f64,
    pub a2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub dis: f64,
    /// Whether unclustered arguments were counted as clusters.
    pub counted_singletons: bool,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn dis(n_posts: usize, n_arguments: usize, n_clusters: usize) -> Result<DeliberationProfile> {
    if n_posts == 0 {
        return Err(Error::Domain("a thread needs at least one post".into()));
    }
    if n_arguments > n_posts {
        return Err(Error::Domain(format!(
            "{n_arguments} arguments exceed {n_posts} posts"
        )));
    }
    if n_clusters > n_arguments.max(1) {
        return Err(Error::Domain(format!(
            "{n_clusters} clusters exceed {n_arguments} arguments"
        )));
    }
    let d_cluster = if n_arguments > 0 {
        n_clusters as f64 / n_arguments as f64
    } else {
        0.0
    };
    let d_arg = n_arguments as f64 / n_posts as f64;
    let a1 = logistic(n_arguments as f64);
    let a2 = logistic(n_posts as f64);
    let sigma1 = a1 / (a1 + a2);
    let sigma2 = a2 / (a1 + a2);
    Ok(DeliberationProfile {
        thread_id: String::new(),
        n_posts,
        n_arguments,
        n_clusters,
        d_cluster,
        d_arg,
        a1,
        a2,
        sigma1,
        sigma2,
        dis: sigma1 * d_cluster + sigma2 * d_arg,
        counted_singletons: true,
    })
}

/// One `(x, P(X > x))` row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcdfPoint {
    pub x: f64,
    pub ccdf: f64,
}

/// Strict-inequality CCDF sampled on `0, step, 2*step, ..., 1`.
pub fn unit_ccdf(values: &[f64], steps: usize) -> Vec<CcdfPoint> {
    let n = values.len();
    (0..=steps)
        .map(|i| {
            let x = i as f64 / steps as f64;
            let above = values.iter().filter(|&&v| v > x).count();
            CcdfPoint {
                x,
                ccdf: if n == 0 { 0.0 } else { above as f64 / n as f64 },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsetProfiles {
    pub profiles: Vec<DeliberationProfile>,
    /// DIS CCDF at 0.01 resolution.
    pub ccdf: Vec<CcdfPoint>,
    /// Threads skipped for lacking labels or clusters.
    pub skipped: Vec<String>,
}

/// Profiles every thread of `subset`. `thread_posts` gives each thread's post
/// ids; labels and per-thread cluster sets come from earlier stages.
pub fn profile_subset(
    subset: &ThreadSubset,
    thread_posts: &HashMap<String, Vec<String>>,
    labels: &HashMap<String, ArgumentLabel>,
    clusters: &HashMap<String, ClusterSet>,
) -> Result<SubsetProfiles> {
    let mut profiles = Vec::new();
    let mut skipped = Vec::new();
    for thread_id in &subset.thread_ids {
        let Some(posts) = thread_posts.get(thread_id) else {
            skipped.push(thread_id.clone());
            continue;
        };
        if posts.iter().any(|p| !labels.contains_key(p)) {
            skipped.push(thread_id.clone());
            continue;
        }
        let n_arguments = posts.iter().filter(|p| labels[*p].is_argument()).count();
        let (n_clusters, counted) = match clusters.get(thread_id) {
            Some(set) => (
                effective_cluster_count(set, n_arguments),
                set.counted_singletons,
            ),
            None if n_arguments == 0 => (0, true),
            None => {
                skipped.push(thread_id.clone());
                continue;
            }
        };
        let mut p = dis(posts.len(), n_arguments, n_clusters)?;
        p.thread_id = thread_id.clone();
        p.counted_singletons = counted;
        profiles.push(p);
    }
    let values: Vec<f64> = profiles.iter().map(|p| p.dis).collect();
    Ok(SubsetProfiles {
        ccdf: unit_ccdf(&values, 100),
        profiles,
        skipped,
    })
}
