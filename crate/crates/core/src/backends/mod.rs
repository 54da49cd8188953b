//! Pluggable analysis backends.
//!
//! Four capabilities are modeled: argument/stance classification, pairwise
//! similarity, sentence embedding and named-entity recognition. Each has a
//! deterministic reference implementation in this crate; the same
//! capabilities can be served by an external adapter process speaking the
//! line-delimited JSON protocol in [`adapter`].

pub mod adapter;
pub mod conformance;
pub mod eval;
pub mod lexicon;
pub mod ner;
pub mod stub;
pub mod tfidf;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::relevance::{Aspect, Provenance};

pub use adapter::AdapterClient;
pub use lexicon::{LexiconClassifier, Lexicons};
pub use ner::{reference_ner, ReferenceNer};
pub use tfidf::{reference_similarity, TfidfSimilarity};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    None,
    For,
    Against,
}

impl Stance {
    pub const ALL: [Stance; 3] = [Stance::None, Stance::For, Stance::Against];

    pub fn is_argument(self) -> bool {
        self != Stance::None
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::None => "none",
            Stance::For => "for",
            Stance::Against => "against",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Stance::None),
            "for" => Some(Stance::For),
            "against" => Some(Stance::Against),
            _ => None,
        }
    }
}

impl fmt::Display for Stance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stance::None => "None",
            Stance::For => "For",
            Stance::Against => "Against",
        })
    }
}

/// Aspect-anchored stance assigned to one post.
///
/// A label with a `For`/`Against` stance always names its aspect. A `None`
/// label keeps the aspect when the post mentions one without arguing about
/// it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentLabel {
    pub post_id: String,
    pub aspect: Option<String>,
    pub stance: Stance,
    pub confidence: f64,
    pub backend_id: String,
}

impl ArgumentLabel {
    pub fn is_argument(&self) -> bool {
        self.stance.is_argument()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub pair: (String, String),
    pub score: f64,
}

/// Dense symmetric similarity matrix with unit diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
}

impl SimilarityMatrix {
    pub fn identity(n: usize) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            values[i * n + i] = 1.0;
        }
        Self { n, values }
    }

    /// Builds a matrix from the upper triangle given by `f(i, j)`, `i < j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::identity(n);
        for i in 0..n {
            for j in i + 1..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, score: f64) {
        let s = score.clamp(0.0, 1.0);
        self.values[i * self.n + j] = s;
        self.values[j * self.n + i] = s;
    }

    pub fn scores(&self, ids: &[String]) -> Vec<SimilarityScore> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(SimilarityScore {
                    pair: (ids[i].clone(), ids[j].clone()),
                    score: self.get(i, j),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Capability {
    Classify,
    Similarity,
    Embed,
    Ner,
}

impl Capability {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "classify" => Some(Capability::Classify),
            "similarity" => Some(Capability::Similarity),
            "embed" => Some(Capability::Embed),
            "ner" => Some(Capability::Ner),
            _ => None,
        }
    }
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Classify => "classify",
            Capability::Similarity => "similarity",
            Capability::Embed => "embed",
            Capability::Ner => "ner",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Reference,
    Adapter,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendHandle {
    pub kind: BackendKind,
    pub backend_id: String,
    pub capabilities: BTreeSet<Capability>,
}

impl BackendHandle {
    pub fn reference(backend_id: &str, caps: &[Capability]) -> Self {
        Self {
            kind: BackendKind::Reference,
            backend_id: backend_id.to_string(),
            capabilities: caps.iter().copied().collect(),
        }
    }

    pub fn require(&self, capability: Capability) -> Result<()> {
        if self.capabilities.contains(&capability) {
            Ok(())
        } else {
            Err(Error::Capability {
                backend: self.backend_id.clone(),
                capability,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Person,
    Location,
    Organization,
    Other,
}

impl EntityType {
    pub fn parse(s: &str) -> Self {
        match s.to_ascii_lowercase().as_str() {
            "person" | "per" => EntityType::Person,
            "location" | "loc" => EntityType::Location,
            "organization" | "org" => EntityType::Organization,
            _ => EntityType::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub text: String,
    pub entity_type: EntityType,
    /// Byte offsets into the source text.
    pub span: (usize, usize),
}

pub trait StanceClassifier {
    fn handle(&self) -> &BackendHandle;

    /// Exactly one label per post, in input order.
    fn classify(&self, posts: &[Post], aspects: &[Aspect]) -> Result<Vec<ArgumentLabel>>;
}

pub trait SimilarityBackend {
    fn handle(&self) -> &BackendHandle;

    fn similarity(&self, texts: &[&str]) -> Result<SimilarityMatrix>;
}

pub trait EntityRecognizer {
    fn handle(&self) -> &BackendHandle;

    fn recognize(&self, texts: &[&str]) -> Result<Vec<Vec<EntityMention>>>;
}

pub trait Embedder {
    fn handle(&self) -> &BackendHandle;

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

/// Cosine similarity over embeddings from any [`Embedder`], clamped to
/// `[0, 1]`.
pub struct EmbeddingSimilarity<'a, E: Embedder + ?Sized> {
    embedder: &'a E,
}

impl<'a, E: Embedder + ?Sized> EmbeddingSimilarity<'a, E> {
    pub fn new(embedder: &'a E) -> Self {
        Self { embedder }
    }
}

impl<E: Embedder + ?Sized> SimilarityBackend for EmbeddingSimilarity<'_, E> {
    fn handle(&self) -> &BackendHandle {
        self.embedder.handle()
    }

    fn similarity(&self, texts: &[&str]) -> Result<SimilarityMatrix> {
        self.embedder.handle().require(Capability::Embed)?;
        let vecs = self.embedder.embed(texts)?;
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok(SimilarityMatrix::from_fn(texts.len(), |i, j| {
            let (a, b) = (&vecs[i], &vecs[j]);
            let d = norm(a) * norm(b);
            if d == 0.0 {
                0.0
            } else {
                a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / d
            }
        }))
    }
}

/// Picks the aspect whose keyword occurs earliest in `words`. Equal offsets
/// resolve to the aspect listed first.
pub(crate) fn choose_aspect<'a>(
    words: &[(String, usize)],
    matchers: &'a [(String, crate::text::KeywordMatcher)],
) -> Option<&'a str> {
    matchers
        .iter()
        .enumerate()
        .filter_map(|(i, (name, m))| m.first_match_in(words).map(|off| (off, i, name)))
        .min_by_key(|&(off, i, _)| (off, i))
        .map(|(_, _, name)| name.as_str())
}

pub(crate) fn aspect_matchers(aspects: &[Aspect]) -> Vec<(String, crate::text::KeywordMatcher)> {
    aspects
        .iter()
        .map(|a| {
            (
                a.name.clone(),
                crate::text::KeywordMatcher::new(&a.keywords),
            )
        })
        .collect()
}

fn normalize_entity(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Discovers aspects as named entities that occur in at least `min_count`
/// distinct threads among the given root posts.
///
/// Results are ranked by thread frequency, descending, then by normalized
/// name. Each aspect is named by its most frequent surface form.
pub fn detect_aspects<N: EntityRecognizer + ?Sized>(
    posts: &[Post],
    min_count: usize,
    ner: &N,
) -> Result<Vec<Aspect>> {
    ner.handle().require(Capability::Ner)?;
    if posts.is_empty() {
        return Err(Error::Invalid(
            "aspect detection needs at least one post".into(),
        ));
    }
    let texts: Vec<String> = posts.iter().map(Post::text).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    let mentions = ner.recognize(&refs)?;

    let mut threads: HashMap<String, BTreeSet<&str>> = HashMap::new();
    let mut surfaces: HashMap<String, BTreeMap<String, usize>> = HashMap::new();
    for (post, found) in posts.iter().zip(&mentions) {
        for m in found {
            let key = normalize_entity(&m.text);
            if key.is_empty() {
                continue;
            }
            threads
                .entry(key.clone())
                .or_default()
                .insert(&post.thread_id);
            *surfaces
                .entry(key)
                .or_default()
                .entry(m.text.split_whitespace().collect::<Vec<_>>().join(" "))
                .or_default() += 1;
        }
    }

    let mut ranked: Vec<(usize, String)> = threads
        .into_iter()
        .filter(|(_, ts)| ts.len() >= min_count.max(1))
        .map(|(k, ts)| (ts.len(), k))
        .collect();
    ranked.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));

    Ok(ranked
        .into_iter()
        .map(|(_, key)| {
            let name = surfaces[&key]
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(s, _)| s.clone())
                .unwrap_or_else(|| key.clone());
            Aspect {
                name,
                keywords: vec![key],
                provenance: Provenance::Discovered,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root(thread: &str, title: &str, body: &str) -> Post {
        Post {
            post_id: thread.into(),
            thread_id: thread.into(),
            parent_id: None,
            author_hash: String::new(),
            created_at: 0,
            title: Some(title.into()),
            body: body.into(),
            score: 1,
            is_root: true,
            orphan: false,
        }
    }

    #[test]
    fn discovers_by_thread_frequency() {
        let posts = vec![
            root("t1", "Question", "Do you buy seed from Monsanto here?"),
            root("t2", "Seeds", "my neighbor says Monsanto owns everything"),
            root("t3", "Help", "is Monsanto still around, or Bayer now"),
            root("t4", "Tractors", "the tiller from Kubota broke"),
            root("t5", "Hello", "first post"),
        ];
        let found = detect_aspects(&posts, 2, &ReferenceNer::new()).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].name, "Monsanto");
        assert_eq!(found[0].keywords, ["monsanto"]);
        assert_eq!(found[0].provenance, Provenance::Discovered);

        assert!(detect_aspects(&posts, 6, &ReferenceNer::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn counts_threads_not_tokens() {
        let posts = vec![
            root(
                "t1",
                "x",
                "ask Kubota, call Kubota, visit Kubota, love Kubota, hate Kubota",
            ),
            root("t2", "y", "nothing here"),
        ];
        assert!(detect_aspects(&posts, 2, &ReferenceNer::new())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn requires_ner_capability() {
        let tfidf = TfidfSimilarity::new();
        struct NoNer(BackendHandle);
        impl EntityRecognizer for NoNer {
            fn handle(&self) -> &BackendHandle {
                &self.0
            }
            fn recognize(&self, _: &[&str]) -> Result<Vec<Vec<EntityMention>>> {
                unreachable!()
            }
        }
        let fake = NoNer(tfidf.handle().clone());
        let err = detect_aspects(&[root("t", "a", "b")], 1, &fake).unwrap_err();
        assert!(matches!(
            err,
            Error::Capability {
                capability: Capability::Ner,
                ..
            }
        ));
    }

    #[test]
    fn earliest_aspect_wins() {
        let aspects = vec![
            Aspect::named("soil", Provenance::Expert),
            Aspect::named("china", Provenance::Expert),
        ];
        let m = aspect_matchers(&aspects);
        let words = crate::text::lower_words("Imports from China hurt soil health");
        assert_eq!(choose_aspect(&words, &m), Some("china"));
        assert_eq!(
            choose_aspect(&crate::text::lower_words("nothing"), &m),
            None
        );
    }
}
