//! Graph exports, distribution tables and the corpus summary report.

mod export;
mod tables;

pub use export::{
    validate_gexf, ExportEdge, ExportFormat, ExportNode, GexfSummary, GraphExport, GEXF_NAMESPACE,
};
pub use tables::{
    args_vs_size, csv_string, least_squares, length_ccdf, stance_histogram, upvote_distribution,
    ArgsVsSize, DistributionRow, DistributionTable, HistogramRow, LinearFit, StanceHistogram,
    TableKind, UNASSIGNED,
};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::deliberation::DeliberationProfile;
use crate::threadgraph::ThreadMetrics;

/// Post counts by argument status.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArgumentBreakdown {
    pub all: usize,
    pub no_argument: usize,
    pub with_arguments: usize,
    pub arguments_for: usize,
    pub arguments_against: usize,
}

impl ArgumentBreakdown {
    pub fn from_histogram(h: &StanceHistogram) -> Self {
        let c = |cat: &str| h.get("all", cat).map_or(0, |r| r.count);
        ArgumentBreakdown {
            all: c("all"),
            no_argument: c("no_argument"),
            with_arguments: c("with_arguments"),
            arguments_for: c("for"),
            arguments_against: c("against"),
        }
    }
}

/// Aggregate shape of the reply trees in a subset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphProperties {
    pub threads: usize,
    pub nodes: usize,
    pub edges: usize,
    /// Edges over nodes, pooled across threads.
    pub avg_degree: f64,
    pub avg_depth: f64,
    pub max_depth: usize,
}

impl GraphProperties {
    pub fn from_metrics(metrics: &[ThreadMetrics]) -> Self {
        let threads = metrics.len();
        let nodes: usize = metrics.iter().map(|m| m.n_posts).sum();
        let edges = nodes - threads;
        GraphProperties {
            threads,
            nodes,
            edges,
            avg_degree: if nodes == 0 {
                0.0
            } else {
                edges as f64 / nodes as f64
            },
            avg_depth: if threads == 0 {
                0.0
            } else {
                metrics.iter().map(|m| m.depth as f64).sum::<f64>() / threads as f64
            },
            max_depth: metrics.iter().map(|m| m.depth).max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DisShares {
    pub threads: usize,
    pub at_most_0_2: f64,
    pub above_0_5: f64,
}

impl DisShares {
    pub fn from_profiles(profiles: &[DeliberationProfile]) -> Self {
        let n = profiles.len();
        let share = |f: &dyn Fn(f64) -> bool| {
            if n == 0 {
                0.0
            } else {
                profiles.iter().filter(|p| f(p.dis)).count() as f64 / n as f64
            }
        };
        DisShares {
            threads: n,
            at_most_0_2: share(&|d| d <= 0.2),
            above_0_5: share(&|d| d > 0.5),
        }
    }
}

/// Corpus-scale summary regenerated by the `report` stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub subset: String,
    pub arguments: ArgumentBreakdown,
    pub graphs: GraphProperties,
    pub dis: DisShares,
}

impl SummaryReport {
    pub fn to_markdown(&self) -> String {
        let pct = |c: usize| {
            if self.arguments.all == 0 {
                0.0
            } else {
                100.0 * c as f64 / self.arguments.all as f64
            }
        };
        let a = &self.arguments;
        let g = &self.graphs;
        let mut s = String::new();
        let _ = writeln!(s, "# Summary of {}\n", self.subset);
        s.push_str("| Post type | Posts | Percentage |\n|---|---|---|\n");
        for (name, c) in [
            ("All", a.all),
            ("No Argument", a.no_argument),
            ("With Arguments", a.with_arguments),
            ("Arguments For", a.arguments_for),
            ("Arguments Against", a.arguments_against),
        ] {
            let _ = writeln!(s, "| {name} | {c} | {:.0}% |", pct(c));
        }
        s.push_str(
            "\n| Threads | Nodes | Edges | Avg. degree | Avg. tree depth | Max tree depth |\n",
        );
        s.push_str("|---|---|---|---|---|---|\n");
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.3} | {:.1} | {} |",
            g.threads, g.nodes, g.edges, g.avg_degree, g.avg_depth, g.max_depth
        );
        let _ = writeln!(
            s,
            "\nDIS over {} threads: {:.1}% at most 0.2, {:.1}% above 0.5.",
            self.dis.threads,
            100.0 * self.dis.at_most_0_2,
            100.0 * self.dis.above_0_5
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deliberation::dis;

    #[test]
    fn graph_properties_pool_threads() {
        let m = |n, depth| ThreadMetrics {
            thread_id: String::new(),
            n_posts: n,
            n_argumentative: 0,
            depth,
            fan_out: 1,
            sub_threads: 0,
            avg_degree: 0.0,
        };
        let g = GraphProperties::from_metrics(&[m(1, 0), m(3, 2), m(4, 1)]);
        assert_eq!((g.nodes, g.edges, g.max_depth), (8, 5, 2));
        assert!((g.avg_degree - 0.625).abs() < 1e-12);
        assert!((g.avg_depth - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dis_shares() {
        let ps = vec![
            dis(10, 0, 0).unwrap(),
            dis(3, 0, 0).unwrap(),
            dis(4, 4, 4).unwrap(),
        ];
        let s = DisShares::from_profiles(&ps);
        assert!((s.at_most_0_2 - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.above_0_5 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn markdown_lists_every_row() {
        let r = SummaryReport {
            subset: "T_GMO".into(),
            ..Default::default()
        };
        let md = r.to_markdown();
        for row in [
            "All",
            "No Argument",
            "With Arguments",
            "Arguments For",
            "Arguments Against",
        ] {
            assert!(md.contains(&format!("| {row} |")));
        }
    }
}
