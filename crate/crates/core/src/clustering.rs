//! Threshold clustering of similar arguments and medoid summaries.
//!
//! Two modes are provided. `Components` takes the connected components of
//! the graph whose edges are pairs scoring at or above the threshold.
//! `Strict` replays the pair-by-pair rule literally: a similar pair creates a
//! cluster when neither side is clustered and extends a cluster when exactly
//! one side is, but a pair spanning two existing clusters never merges them.
//! Strict output therefore depends on pair order.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::backends::{ArgumentLabel, SimilarityBackend, SimilarityMatrix, Stance};
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMode {
    #[default]
    Components,
    Strict,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StanceProfile {
    #[serde(rename = "for")]
    pub n_for: usize,
    #[serde(rename = "against")]
    pub n_against: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub cluster_id: usize,
    /// Sorted ascending.
    pub member_post_ids: Vec<String>,
    pub summary_post_id: Option<String>,
    pub stance_profile: StanceProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    /// Multi-member clusters, ordered by their smallest member id.
    pub clusters: Vec<Cluster>,
    /// Arguments that joined no cluster.
    pub singletons: Vec<String>,
    pub mode: ClusterMode,
    pub threshold: f64,
    pub counted_singletons: bool,
}

impl ClusterSet {
    pub fn n_arguments(&self) -> usize {
        self.singletons.len()
            + self
                .clusters
                .iter()
                .map(|c| c.member_post_ids.len())
                .sum::<usize>()
    }
}

pub struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    pub fn find(&mut self, mut node: usize) -> usize {
        let mut root = node;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[node] != root {
            let next = self.parent[node];
            self.parent[node] = root;
            node = next;
        }
        root
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.rank[a] < self.rank[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        if self.rank[a] == self.rank[b] {
            self.rank[a] = self.rank[a].saturating_add(1);
        }
        true
    }
}

/// Connected components over pairs with similarity `>= threshold`. Returns
/// groups of indices; singletons included.
pub fn component_groups(sim: &SimilarityMatrix, threshold: f64) -> Vec<Vec<usize>> {
    let n = sim.len();
    let mut ds = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if sim.get(i, j) >= threshold {
                ds.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(ds.find(i)).or_default().push(i);
    }
    groups.into_values().collect()
}

/// Literal pair-stream clustering. `pairs` are visited in the given order;
/// groups of size one are returned for untouched arguments.
pub fn strict_groups<I>(n: usize, pairs: I, threshold: f64) -> Vec<Vec<usize>>
where
    I: IntoIterator<Item = (usize, usize, f64)>,
{
    let mut cluster_of: Vec<Option<usize>> = vec![None; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (a, b, score) in pairs {
        if a == b || score < threshold {
            continue;
        }
        match (cluster_of[a], cluster_of[b]) {
            (None, None) => {
                cluster_of[a] = Some(clusters.len());
                cluster_of[b] = Some(clusters.len());
                clusters.push(vec![a, b]);
            }
            (Some(c), None) => {
                cluster_of[b] = Some(c);
                clusters[c].push(b);
            }
            (None, Some(c)) => {
                cluster_of[a] = Some(c);
                clusters[c].push(a);
            }
            (Some(_), Some(_)) => {}
        }
    }
    clusters
        .into_iter()
        .chain((0..n).filter(|&i| cluster_of[i].is_none()).map(|i| vec![i]))
        .collect()
}

/// Pairs in sorted `(i, j)` order, `i < j`.
pub fn sorted_pairs(sim: &SimilarityMatrix) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
    let n = sim.len();
    (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j, sim.get(i, j))))
}

/// Member of `group` with the highest mean similarity to the other members.
/// Ties resolve to the smallest id. Returns an index into `ids`.
pub fn medoid(group: &[usize], sim: &SimilarityMatrix, ids: &[String]) -> Option<usize> {
    if group.len() <= 1 {
        return group.first().copied();
    }
    let others = (group.len() - 1) as f64;
    let mut best: Option<(usize, f64)> = None;
    for &i in group {
        let mean = group
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| sim.get(i, j))
            .sum::<f64>()
            / others;
        best = match best {
            Some((b, s)) if s > mean || (s == mean && ids[b] < ids[i]) => Some((b, s)),
            _ => Some((i, mean)),
        };
    }
    best.map(|(i, _)| i)
}

/// Clusters the given arguments. `labels` supplies post ids and stances,
/// `sim` their pairwise similarities in the same order.
pub fn cluster_arguments(
    labels: &[&ArgumentLabel],
    sim: &SimilarityMatrix,
    threshold: f64,
    mode: ClusterMode,
) -> Result<ClusterSet> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Invalid(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    if sim.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "similarity matrix covers {} arguments, expected {}",
            sim.len(),
            labels.len()
        )));
    }
    let groups = match mode {
        ClusterMode::Components => component_groups(sim, threshold),
        ClusterMode::Strict => strict_groups(sim.len(), sorted_pairs(sim), threshold),
    };
    Ok(build_set(labels, sim, groups, threshold, mode))
}

fn build_set(
    labels: &[&ArgumentLabel],
    sim: &SimilarityMatrix,
    groups: Vec<Vec<usize>>,
    threshold: f64,
    mode: ClusterMode,
) -> ClusterSet {
    let ids: Vec<String> = labels.iter().map(|l| l.post_id.clone()).collect();
    let mut singletons = Vec::new();
    let mut clusters = Vec::new();
    for g in groups {
        if g.len() < 2 {
            singletons.extend(g.iter().map(|&i| ids[i].clone()));
            continue;
        }
        let mut profile = StanceProfile::default();
        for &i in &g {
            match labels[i].stance {
                Stance::For => profile.n_for += 1,
                Stance::Against => profile.n_against += 1,
                Stance::None => {}
            }
        }
        let mut members: Vec<String> = g.iter().map(|&i| ids[i].clone()).collect();
        members.sort();
        clusters.push(Cluster {
            cluster_id: 0,
            member_post_ids: members,
            summary_post_id: medoid(&g, sim, &ids).map(|i| ids[i].clone()),
            stance_profile: profile,
        });
    }
    clusters.sort_by(|a, b| a.member_post_ids[0].cmp(&b.member_post_ids[0]));
    for (k, c) in clusters.iter_mut().enumerate() {
        c.cluster_id = k;
    }
    singletons.sort();
    ClusterSet {
        clusters,
        singletons,
        mode,
        threshold,
        counted_singletons: true,
    }
}

/// Clusters argumentative labels using `backend` for similarity. Arguments
/// are ordered by post id before pairs are visited. `texts` maps post ids to
/// the text compared.
pub fn cluster_with_backend<S: SimilarityBackend + ?Sized>(
    labels: &[ArgumentLabel],
    texts: &HashMap<String, String>,
    backend: &S,
    threshold: f64,
    mode: ClusterMode,
) -> Result<ClusterSet> {
    let mut args: Vec<&ArgumentLabel> = labels.iter().filter(|l| l.is_argument()).collect();
    args.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    let bodies = args
        .iter()
        .map(|l| {
            texts
                .get(&l.post_id)
                .map(String::as_str)
                .ok_or_else(|| Error::NotFound {
                    kind: "post",
                    id: l.post_id.clone(),
                })
        })
        .collect::<Result<Vec<&str>>>()?;
    let sim = if bodies.len() < 2 {
        SimilarityMatrix::identity(bodies.len())
    } else {
        backend.similarity(&bodies)?
    };
    cluster_arguments(&args, &sim, threshold, mode)
}

/// Medoid of a cluster under `backend`'s similarity.
pub fn summarize_cluster<S: SimilarityBackend + ?Sized>(
    cluster: &Cluster,
    texts: &HashMap<String, String>,
    backend: &S,
) -> Result<String> {
    let ids = &cluster.member_post_ids;
    if ids.is_empty() {
        return Err(Error::Invalid("cannot summarize an empty cluster".into()));
    }
    if ids.len() == 1 {
        return Ok(ids[0].clone());
    }
    let bodies = ids
        .iter()
        .map(|id| {
            texts
                .get(id)
                .map(String::as_str)
                .ok_or_else(|| Error::NotFound {
                    kind: "post",
                    id: id.clone(),
                })
        })
        .collect::<Result<Vec<&str>>>()?;
    let sim = backend.similarity(&bodies)?;
    let all: Vec<usize> = (0..ids.len()).collect();
    Ok(ids[medoid(&all, &sim, ids).expect("non-empty")].clone())
}

/// `#Clusters` for the deliberation score. With singletons counted, every
/// unclustered argument is its own cluster; otherwise only multi-member
/// clusters count.
pub fn effective_cluster_count(set: &ClusterSet, n_arguments: usize) -> usize {
    let multi = set.clusters.len();
    if !set.counted_singletons {
        return multi;
    }
    let clustered: usize = set.clusters.iter().map(|c| c.member_post_ids.len()).sum();
    multi + n_arguments.saturating_sub(clustered)
}
