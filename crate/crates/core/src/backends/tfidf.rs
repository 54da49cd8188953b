//! TF-IDF cosine similarity over a small corpus of argument texts.

use std::collections::BTreeMap;

use super::{BackendHandle, Capability, SimilarityBackend, SimilarityMatrix};
use crate::error::Result;
use crate::text::{is_stopword, lower_words};

fn tokens(text: &str) -> Vec<String> {
    lower_words(text)
        .into_iter()
        .map(|(w, _)| w)
        .filter(|w| !is_stopword(w))
        .collect()
}

/// Pairwise cosine similarity of L2-normalized TF-IDF vectors, with raw term
/// counts and smoothed IDF `ln((1 + n) / (1 + df)) + 1`.
///
/// A text with no surviving tokens scores 0 against every other text and 1
/// against itself.
pub fn reference_similarity(texts: &[&str]) -> SimilarityMatrix {
    let docs: Vec<BTreeMap<String, f64>> = texts
        .iter()
        .map(|t| {
            let mut tf = BTreeMap::new();
            for tok in tokens(t) {
                *tf.entry(tok).or_insert(0.0) += 1.0;
            }
            tf
        })
        .collect();

    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for d in &docs {
        for term in d.keys() {
            *df.entry(term.as_str()).or_insert(0.0) += 1.0;
        }
    }
    let n = docs.len() as f64;

    let vectors: Vec<BTreeMap<&str, f64>> = docs
        .iter()
        .map(|d| {
            let mut v: BTreeMap<&str, f64> = d
                .iter()
                .map(|(term, tf)| {
                    let idf = ((1.0 + n) / (1.0 + df[term.as_str()])).ln() + 1.0;
                    (term.as_str(), tf * idf)
                })
                .collect();
            let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.values_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect();

    SimilarityMatrix::from_fn(texts.len(), |i, j| {
        let (a, b) = (&vectors[i], &vectors[j]);
        let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small
            .iter()
            .filter_map(|(t, x)| large.get(t).map(|y| x * y))
            .sum::<f64>()
            .min(1.0)
    })
}

#[derive(Debug, Clone)]
pub struct TfidfSimilarity {
    handle: BackendHandle,
}

impl TfidfSimilarity {
    pub fn new() -> Self {
        Self {
            handle: BackendHandle::reference("tfidf", &[Capability::Similarity]),
        }
    }
}

impl Default for TfidfSimilarity {
    fn default() -> Self {
        Self::new()
    }
}

impl SimilarityBackend for TfidfSimilarity {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn similarity(&self, texts: &[&str]) -> Result<SimilarityMatrix> {
        Ok(reference_similarity(texts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_texts_score_one() {
        let m = reference_similarity(&["GMO corn yields", "GMO corn yields", "other"]);
        assert!((m.get(0, 1) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_texts_score_zero() {
        let m = reference_similarity(&["corn yields", "soil erosion"]);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn empty_text_convention() {
        let m = reference_similarity(&["the and of", "corn", "the"]);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 2), 0.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    // Values from a standalone dense TF-IDF computation (numpy) over the
    // same three texts.
    #[test]
    fn matches_dense_computation() {
        let m = reference_similarity(&[
            "Farmers plant corn and soy",
            "Corn yields rise; gmo corn!",
            "soy prices fall",
        ]);
        assert!((m.get(0, 1) - 0.282449019709711).abs() < 1e-9);
        assert!((m.get(0, 2) - 0.202735272810817).abs() < 1e-9);
        assert!(m.get(1, 2).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn symmetric_unit_diagonal_bounded(texts in proptest::collection::vec("(corn|soy|gmo|seed|the|rain| ){0,8}", 2..7)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let m = reference_similarity(&refs);
            for i in 0..refs.len() {
                prop_assert_eq!(m.get(i, i), 1.0);
                for j in 0..refs.len() {
                    prop_assert_eq!(m.get(i, j), m.get(j, i));
                    prop_assert!((0.0..=1.0).contains(&m.get(i, j)));
                }
            }
        }
    }
}
