//! Word segmentation and keyword matching shared by the matchers and the
//! reference backends.

use unicode_segmentation::UnicodeSegmentation;

/// A word token with its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub start: usize,
    pub end: usize,
}

/// Splits `text` into words using Unicode word boundaries. Punctuation and
/// whitespace segments are dropped.
pub fn words(text: &str) -> Vec<Word<'_>> {
    text.unicode_word_indices()
        .map(|(start, w)| Word {
            text: w,
            start,
            end: start + w.len(),
        })
        .collect()
}

/// Lowercased word list, used for whole-word matching.
pub fn lower_words(text: &str) -> Vec<(String, usize)> {
    words(text)
        .into_iter()
        .map(|w| (w.text.to_lowercase(), w.start))
        .collect()
}

/// Whitespace-delimited token count.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Normalizes a keyword into its lowercase word sequence. Returns `None`
/// when the keyword contains no word characters.
pub fn keyword_words(keyword: &str) -> Option<Vec<String>> {
    let ws: Vec<String> = lower_words(keyword).into_iter().map(|(w, _)| w).collect();
    if ws.is_empty() {
        None
    } else {
        Some(ws)
    }
}

/// Case-insensitive whole-word matcher over a fixed keyword list.
/// Multiword keywords match contiguous word sequences.
#[derive(Debug, Clone, Default)]
pub struct KeywordMatcher {
    patterns: Vec<Vec<String>>,
}

impl KeywordMatcher {
    pub fn new<I, S>(keywords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let patterns = keywords
            .into_iter()
            .filter_map(|k| keyword_words(k.as_ref()))
            .collect();
        Self { patterns }
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    /// Byte offset of the earliest match, if any.
    pub fn first_match(&self, text: &str) -> Option<usize> {
        self.first_match_in(&lower_words(text))
    }

    pub fn first_match_in(&self, words: &[(String, usize)]) -> Option<usize> {
        (0..words.len())
            .find(|&i| self.patterns.iter().any(|p| matches_at(words, i, p)))
            .map(|i| words[i].1)
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.first_match(text).is_some()
    }

    /// Number of (possibly overlapping) keyword occurrences.
    pub fn count_in(&self, words: &[(String, usize)]) -> usize {
        (0..words.len())
            .map(|i| {
                self.patterns
                    .iter()
                    .filter(|p| matches_at(words, i, p))
                    .count()
            })
            .sum()
    }
}

fn matches_at(words: &[(String, usize)], at: usize, pattern: &[String]) -> bool {
    at + pattern.len() <= words.len() && pattern.iter().zip(&words[at..]).all(|(p, (w, _))| p == w)
}

/// English stopwords used by the TF-IDF similarity and the reference NER.
pub const STOPWORDS: &[&str] = &[
    "a",
    "about",
    "above",
    "after",
    "again",
    "against",
    "all",
    "am",
    "an",
    "and",
    "any",
    "are",
    "as",
    "at",
    "be",
    "because",
    "been",
    "before",
    "being",
    "below",
    "between",
    "both",
    "but",
    "by",
    "can",
    "could",
    "did",
    "do",
    "does",
    "doing",
    "down",
    "during",
    "each",
    "few",
    "for",
    "from",
    "further",
    "had",
    "has",
    "have",
    "having",
    "he",
    "her",
    "here",
    "hers",
    "herself",
    "him",
    "himself",
    "his",
    "how",
    "i",
    "if",
    "in",
    "into",
    "is",
    "it",
    "its",
    "itself",
    "just",
    "me",
    "more",
    "most",
    "my",
    "myself",
    "no",
    "nor",
    "not",
    "now",
    "of",
    "off",
    "on",
    "once",
    "only",
    "or",
    "other",
    "our",
    "ours",
    "ourselves",
    "out",
    "over",
    "own",
    "same",
    "she",
    "should",
    "so",
    "some",
    "such",
    "than",
    "that",
    "the",
    "their",
    "theirs",
    "them",
    "themselves",
    "then",
    "there",
    "these",
    "they",
    "this",
    "those",
    "through",
    "to",
    "too",
    "under",
    "until",
    "up",
    "very",
    "was",
    "we",
    "were",
    "what",
    "when",
    "where",
    "which",
    "while",
    "who",
    "whom",
    "why",
    "will",
    "with",
    "would",
    "you",
    "your",
    "yours",
    "yourself",
    "yourselves",
];

pub fn is_stopword(lower: &str) -> bool {
    STOPWORDS.binary_search(&lower).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stopwords_sorted() {
        let mut sorted = STOPWORDS.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted, STOPWORDS);
    }

    #[test]
    fn whole_word_only() {
        let m = KeywordMatcher::new(["gmo"]);
        assert!(!m.is_match("a pygmoid shape"));
        assert!(!m.is_match("I think GMOs are fine"));
        assert!(m.is_match("GMO!"));
    }

    #[test]
    fn multiword_sequence() {
        let m = KeywordMatcher::new(["climate change"]);
        assert!(m.is_match("All this Climate   Change talk"));
        assert!(!m.is_match("climate is a change"));
        assert_eq!(m.first_match("the climate change"), Some(4));
    }

    #[test]
    fn counts_occurrences() {
        let m = KeywordMatcher::new(["harm", "toxic"]);
        let ws = lower_words("Toxic and harmful, harm harm");
        assert_eq!(m.count_in(&ws), 3);
    }
}
