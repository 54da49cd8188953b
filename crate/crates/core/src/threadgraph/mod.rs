//! Reply-tree representation of a thread and its structural metrics.
//!
//! Every post is a node and every reply adds an edge from the reply to the
//! post it answers, so the root is the only node without an outgoing edge.
//! Depth counts edges, with the root at depth 0.

mod postrank;
mod stance;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::backends::ArgumentLabel;
use crate::corpus::Post;
use crate::error::{Error, Result};

pub use postrank::{postrank, PostRankConfig, PostRankResult};
pub use stance::{stance_dependence, Row, StanceTransitionTable, Transitions};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadGraph {
    thread_id: String,
    nodes: Vec<String>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root: usize,
    index: HashMap<String, usize>,
}

impl ThreadGraph {
    /// Builds a graph from node ids and their parent ids. Exactly one node
    /// must have no parent, and every node must be reachable from it.
    pub fn from_parents(
        thread_id: &str,
        nodes: Vec<String>,
        parents: &[Option<String>],
    ) -> Result<Self> {
        let structural = |reason: String| Error::Structure {
            thread_id: thread_id.to_string(),
            reason,
        };
        if nodes.len() != parents.len() {
            return Err(structural("node and parent lists differ in length".into()));
        }
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, id) in nodes.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(structural(format!("duplicate post {id}")));
            }
        }
        let roots: Vec<usize> = (0..nodes.len()).filter(|&i| parents[i].is_none()).collect();
        let root = match roots.as_slice() {
            [r] => *r,
            [] => return Err(structural("no root post".into())),
            _ => return Err(structural(format!("{} root posts", roots.len()))),
        };
        let mut parent = vec![None; nodes.len()];
        let mut children = vec![Vec::new(); nodes.len()];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = p {
                let &j = index
                    .get(p)
                    .ok_or_else(|| structural(format!("parent {p} of {} missing", nodes[i])))?;
                parent[i] = Some(j);
                children[j].push(i);
            }
        }
        let g = Self {
            thread_id: thread_id.to_string(),
            nodes,
            parent,
            children,
            root,
            index,
        };
        if g.depths().iter().any(Option::is_none) {
            return Err(structural("reply cycle detached from the root".into()));
        }
        Ok(g)
    }

    pub fn thread_id(&self) -> &str {
        &self.thread_id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn root_id(&self) -> &str {
        &self.nodes[self.root]
    }

    pub fn index_of(&self, post_id: &str) -> Option<usize> {
        self.index.get(post_id).copied()
    }

    pub fn parent_of(&self, node: usize) -> Option<usize> {
        self.parent[node]
    }

    pub fn children_of(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        usize::from(self.parent[node].is_some())
    }

    pub fn in_degree(&self, node: usize) -> usize {
        self.children[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.parent.iter().filter(|p| p.is_some()).count()
    }

    /// `(child, parent)` ids.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(c, p)| p.map(|p| (self.nodes[c].as_str(), self.nodes[p].as_str())))
    }

    fn depths(&self) -> Vec<Option<usize>> {
        let mut depth = vec![None; self.nodes.len()];
        let mut queue = VecDeque::from([self.root]);
        depth[self.root] = Some(0);
        while let Some(v) = queue.pop_front() {
            let d = depth[v].expect("queued nodes have depth");
            for &c in &self.children[v] {
                if depth[c].is_none() {
                    depth[c] = Some(d + 1);
                    queue.push_back(c);
                }
            }
        }
        depth
    }

    /// Edge count of the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        self.depths().into_iter().flatten().max().unwrap_or(0)
    }

    pub fn leaf_count(&self) -> usize {
        self.children.iter().filter(|c| c.is_empty()).count()
    }

    /// Posts answered by more than one reply.
    pub fn sub_thread_count(&self) -> usize {
        self.children.iter().filter(|c| c.len() >= 2).count()
    }
}

pub fn build_graph(thread_id: &str, posts: &[Post]) -> Result<ThreadGraph> {
    let ids = posts.iter().map(|p| p.post_id.clone()).collect();
    let parents: Vec<Option<String>> = posts
        .iter()
        .map(|p| if p.is_root { None } else { p.parent_id.clone() })
        .collect();
    ThreadGraph::from_parents(thread_id, ids, &parents)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreadMetrics {
    pub thread_id: String,
    pub n_posts: usize,
    pub n_argumentative: usize,
    pub depth: usize,
    pub fan_out: usize,
    pub sub_threads: usize,
    pub avg_degree: f64,
}

/// Structural metrics; posts without a label count as non-argumentative.
pub fn compute_metrics(
    graph: &ThreadGraph,
    labels: &HashMap<String, ArgumentLabel>,
) -> ThreadMetrics {
    let n_argumentative = graph
        .nodes()
        .iter()
        .filter(|id| labels.get(*id).is_some_and(ArgumentLabel::is_argument))
        .count();
    ThreadMetrics {
        thread_id: graph.thread_id().to_string(),
        n_posts: graph.len(),
        n_argumentative,
        depth: graph.depth(),
        fan_out: graph.leaf_count(),
        sub_threads: graph.sub_thread_count(),
        avg_degree: graph.edge_count() as f64 / graph.len() as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tree(parents: &[Option<usize>]) -> ThreadGraph {
        let ids: Vec<String> = (0..parents.len()).map(|i| format!("p{i:02}")).collect();
        let ps: Vec<Option<String>> = parents.iter().map(|p| p.map(|j| ids[j].clone())).collect();
        ThreadGraph::from_parents("t", ids, &ps).unwrap()
    }

    fn metrics(parents: &[Option<usize>]) -> ThreadMetrics {
        compute_metrics(&tree(parents), &HashMap::new())
    }

    #[test]
    fn two_direct_replies() {
        let g = tree(&[None, Some(0), Some(0)]);
        assert_eq!((g.len(), g.edge_count(), g.leaf_count()), (3, 2, 2));
        assert_eq!(g.out_degree(0), 0);
        assert_eq!(g.in_degree(0), 2);
    }

    #[test]
    fn single_post() {
        let m = metrics(&[None]);
        assert_eq!((m.depth, m.fan_out, m.sub_threads), (0, 1, 0));
        assert_eq!(m.avg_degree, 0.0);
        assert_eq!(tree(&[None]).edge_count(), 0);
    }

    #[test]
    fn chain_of_four() {
        let m = metrics(&[None, Some(0), Some(1), Some(2)]);
        assert_eq!((m.depth, m.fan_out), (3, 1));
    }

    #[test]
    fn star_of_five() {
        let m = metrics(&[None, Some(0), Some(0), Some(0), Some(0), Some(0)]);
        assert_eq!((m.depth, m.fan_out, m.sub_threads), (1, 5, 1));
    }

    #[test]
    fn rejects_bad_structure() {
        let ids = vec!["a".to_string(), "b".to_string()];
        assert!(ThreadGraph::from_parents("t", ids.clone(), &[None, None]).is_err());
        assert!(
            ThreadGraph::from_parents("t", ids.clone(), &[Some("b".into()), Some("a".into())])
                .is_err()
        );
        assert!(ThreadGraph::from_parents("t", ids, &[None, Some("zz".into())]).is_err());
        let ids3: Vec<String> = ["r", "a", "b"].map(String::from).to_vec();
        assert!(
            ThreadGraph::from_parents("t", ids3, &[None, Some("b".into()), Some("a".into())])
                .is_err()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        pub(crate) fn random_parents() -> impl Strategy<Value = Vec<Option<usize>>> {
            (1usize..=50).prop_flat_map(|n| {
                proptest::collection::vec(any::<proptest::sample::Index>(), n - 1).prop_map(
                    move |picks| {
                        let mut ps = vec![None];
                        for (i, pick) in picks.into_iter().enumerate() {
                            ps.push(Some(pick.index(i + 1)));
                        }
                        ps
                    },
                )
            })
        }

        /// Recursive DFS over explicit child lists.
        fn dfs_oracle(parents: &[Option<usize>]) -> (usize, usize) {
            fn go(v: usize, d: usize, kids: &[Vec<usize>], best: &mut usize, leaves: &mut usize) {
                *best = (*best).max(d);
                if kids[v].is_empty() {
                    *leaves += 1;
                }
                for &c in &kids[v] {
                    go(c, d + 1, kids, best, leaves);
                }
            }
            let mut kids = vec![Vec::new(); parents.len()];
            for (c, p) in parents.iter().enumerate() {
                if let Some(p) = p {
                    kids[*p].push(c);
                }
            }
            let (mut depth, mut leaves) = (0, 0);
            go(0, 0, &kids, &mut depth, &mut leaves);
            (depth, leaves)
        }

        proptest! {
            #[test]
            fn depth_and_fan_out_match_dfs(parents in random_parents()) {
                let g = tree(&parents);
                prop_assert_eq!((g.depth(), g.leaf_count()), dfs_oracle(&parents));
                prop_assert_eq!(g.edge_count(), g.len() - 1);
                let m = compute_metrics(&g, &HashMap::new());
                prop_assert!(m.depth < m.n_posts);
                prop_assert!(m.fan_out >= 1);
                prop_assert!(m.sub_threads < m.n_posts);
            }
        }
    }
}
