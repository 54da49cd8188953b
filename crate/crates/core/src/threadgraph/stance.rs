//! Conditional stance of a reply given the stance of the post it answers.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::ThreadGraph;
use crate::backends::{ArgumentLabel, Stance};

/// Values keyed by child stance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Row<T> {
    #[serde(rename = "for")]
    pub to_for: T,
    #[serde(rename = "against")]
    pub to_against: T,
}

/// Rows keyed by parent stance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Transitions<T> {
    #[serde(rename = "for")]
    pub from_for: T,
    #[serde(rename = "against")]
    pub from_against: T,
}

impl<T> Transitions<T> {
    fn row(&self, parent: Stance) -> Option<&T> {
        match parent {
            Stance::For => Some(&self.from_for),
            Stance::Against => Some(&self.from_against),
            Stance::None => None,
        }
    }

    fn row_mut(&mut self, parent: Stance) -> Option<&mut T> {
        match parent {
            Stance::For => Some(&mut self.from_for),
            Stance::Against => Some(&mut self.from_against),
            Stance::None => None,
        }
    }
}

impl<T: Copy> Row<T> {
    fn get(&self, child: Stance) -> Option<T> {
        match child {
            Stance::For => Some(self.to_for),
            Stance::Against => Some(self.to_against),
            Stance::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StanceTransitionTable {
    pub counts: Transitions<Row<u64>>,
    /// `P(child | parent)`; a row is `None` when no qualifying pair has that
    /// parent stance.
    pub probabilities: Transitions<Option<Row<f64>>>,
    pub same_aspect_only: bool,
}

impl StanceTransitionTable {
    pub fn count(&self, parent: Stance, child: Stance) -> u64 {
        self.counts
            .row(parent)
            .and_then(|r| r.get(child))
            .unwrap_or(0)
    }

    pub fn probability(&self, child: Stance, given_parent: Stance) -> Option<f64> {
        self.probabilities
            .row(given_parent)
            .copied()
            .flatten()
            .and_then(|r| r.get(child))
    }
}

/// Counts parent-to-reply stance transitions over every reply edge where
/// both posts are arguments (and, optionally, about the same aspect).
pub fn stance_dependence<'a, I>(
    graphs: I,
    labels: &HashMap<String, ArgumentLabel>,
    same_aspect_only: bool,
) -> StanceTransitionTable
where
    I: IntoIterator<Item = &'a ThreadGraph>,
{
    let mut counts: Transitions<Row<u64>> = Transitions::default();
    for g in graphs {
        for (child, parent) in g.edges() {
            let (Some(c), Some(p)) = (labels.get(child), labels.get(parent)) else {
                continue;
            };
            if !c.is_argument() || !p.is_argument() {
                continue;
            }
            if same_aspect_only && c.aspect != p.aspect {
                continue;
            }
            let row = counts.row_mut(p.stance).expect("argument stance");
            match c.stance {
                Stance::For => row.to_for += 1,
                Stance::Against => row.to_against += 1,
                Stance::None => unreachable!(),
            }
        }
    }
    let conditional = |r: &Row<u64>| {
        let total = r.to_for + r.to_against;
        (total > 0).then(|| Row {
            to_for: r.to_for as f64 / total as f64,
            to_against: r.to_against as f64 / total as f64,
        })
    };
    StanceTransitionTable {
        probabilities: Transitions {
            from_for: conditional(&counts.from_for),
            from_against: conditional(&counts.from_against),
        },
        counts,
        same_aspect_only,
    }
}
