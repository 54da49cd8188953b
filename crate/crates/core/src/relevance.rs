//! Topic definitions and topic-relevant thread selection.

use std::collections::{BTreeSet, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Post};
use crate::error::{Error, Result};
use crate::text::KeywordMatcher;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Expert,
    Discovered,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Aspect {
    pub name: String,
    pub keywords: Vec<String>,
    pub provenance: Provenance,
}

impl Aspect {
    /// An aspect whose only keyword is its own (lowercased) name.
    pub fn named(name: &str, provenance: Provenance) -> Self {
        Self {
            name: name.to_string(),
            keywords: vec![name.to_lowercase()],
            provenance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicConfig {
    pub topic_name: String,
    pub topic_keywords: Vec<String>,
    #[serde(default)]
    pub aspects: Vec<Aspect>,
}

impl TopicConfig {
    /// Lowercases keyword lists and checks the structural invariants.
    pub fn normalized(mut self) -> Result<Self> {
        fn norm(list: &mut Vec<String>) {
            for k in list.iter_mut() {
                *k = k.trim().to_lowercase();
            }
            list.retain(|k| !k.is_empty());
            list.dedup();
        }
        norm(&mut self.topic_keywords);
        if self.topic_keywords.is_empty() {
            return Err(Error::Invalid(format!(
                "topic `{}` needs at least one keyword",
                self.topic_name
            )));
        }
        let mut names = HashSet::new();
        for a in &mut self.aspects {
            norm(&mut a.keywords);
            if a.keywords.is_empty() {
                return Err(Error::Invalid(format!(
                    "aspect `{}` has no keywords",
                    a.name
                )));
            }
            if !names.insert(a.name.clone()) {
                return Err(Error::Invalid(format!("duplicate aspect `{}`", a.name)));
            }
        }
        Ok(self)
    }

    /// The topic itself as a labelable aspect, for posts that argue about the
    /// topic without naming a narrower aspect.
    pub fn topic_aspect(&self) -> Aspect {
        Aspect {
            name: self.topic_name.clone(),
            keywords: self.topic_keywords.clone(),
            provenance: Provenance::Expert,
        }
    }

    /// Topic aspect first, then configured aspects; aspects sharing the
    /// topic's name are not repeated.
    pub fn labeling_aspects(&self) -> Vec<Aspect> {
        let mut out = vec![self.topic_aspect()];
        out.extend(
            self.aspects
                .iter()
                .filter(|a| a.name != self.topic_name)
                .cloned(),
        );
        out
    }

    pub fn matcher(&self) -> KeywordMatcher {
        KeywordMatcher::new(
            self.topic_keywords
                .iter()
                .chain(self.aspects.iter().flat_map(|a| a.keywords.iter())),
        )
    }

    /// Adds aspects whose names are not already present.
    pub fn merge_aspects(&mut self, found: impl IntoIterator<Item = Aspect>) -> usize {
        let mut added = 0;
        for a in found {
            if self
                .aspects
                .iter()
                .all(|b| !b.name.eq_ignore_ascii_case(&a.name))
            {
                self.aspects.push(a);
                added += 1;
            }
        }
        added
    }
}

/// The GMO topic with its expert-provided and discovered aspects.
pub fn default_gmo_topic() -> TopicConfig {
    use Provenance::*;
    let aspects = [
        ("gene editing", Expert),
        ("CRISPR", Expert),
        ("biotechnology", Expert),
        ("genomics based", Expert),
        ("Monsanto", Discovered),
        ("China", Discovered),
        ("John Deere", Discovered),
        ("Climate Change", Discovered),
        ("Soil Science", Discovered),
    ]
    .into_iter()
    .map(|(n, p)| Aspect::named(n, p))
    .collect();
    TopicConfig {
        topic_name: "GMO".into(),
        topic_keywords: vec![
            "gmo".into(),
            "gmos".into(),
            "genetically modified organisms".into(),
            "genetically modified organism".into(),
        ],
        aspects,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreadSubset {
    pub label: String,
    pub thread_ids: BTreeSet<String>,
}

impl ThreadSubset {
    pub fn len(&self) -> usize {
        self.thread_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thread_ids.is_empty()
    }
}

/// Whole-word, case-insensitive keyword test over title and body.
pub fn match_post(post: &Post, topic: &TopicConfig) -> bool {
    post_matches(post, &topic.matcher())
}

fn post_matches(post: &Post, matcher: &KeywordMatcher) -> bool {
    post.title.as_deref().is_some_and(|t| matcher.is_match(t)) || matcher.is_match(&post.body)
}

pub fn subset_label(topic: &TopicConfig) -> String {
    format!("T_{}", topic.topic_name)
}

/// Threads containing at least one likely-relevant post.
pub fn select_threads(corpus: &Corpus, topic: &TopicConfig) -> ThreadSubset {
    let matcher = topic.matcher();
    let thread_ids = corpus
        .posts
        .par_iter()
        .filter(|p| post_matches(p, &matcher))
        .map(|p| p.thread_id.clone())
        .collect::<Vec<_>>()
        .into_iter()
        .collect();
    ThreadSubset {
        label: subset_label(topic),
        thread_ids,
    }
}

/// Keeps threads with strictly more than `min_posts` posts.
pub fn filter_by_min_posts(
    subset: &ThreadSubset,
    corpus: &Corpus,
    min_posts: usize,
    label: impl Into<String>,
) -> ThreadSubset {
    ThreadSubset {
        label: label.into(),
        thread_ids: subset
            .thread_ids
            .iter()
            .filter(|t| corpus.thread_size(t) > min_posts)
            .cloned()
            .collect(),
    }
}
