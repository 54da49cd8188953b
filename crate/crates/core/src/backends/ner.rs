//! Capitalization-based entity recognizer used when no NER model is
//! attached.

use unicode_segmentation::UnicodeSegmentation;

use super::{BackendHandle, Capability, EntityMention, EntityRecognizer, EntityType};
use crate::error::Result;
use crate::text::is_stopword;

/// Maximal runs of capitalized, non-stopword words. A run made of a single
/// sentence-initial word is ignored, since capitalization there carries no
/// information. Possessive `'s` is not part of the mention.
pub fn reference_ner(text: &str) -> Vec<EntityMention> {
    let mut out = Vec::new();
    // (start, end, words, sentence_initial)
    let mut run: Option<(usize, usize, usize, bool)> = None;
    let mut sentence_start = true;

    let mut close = |run: &mut Option<(usize, usize, usize, bool)>| {
        if let Some((start, end, n, initial)) = run.take() {
            if n >= 2 || !initial {
                out.push(EntityMention {
                    text: text[start..end].to_string(),
                    entity_type: EntityType::Other,
                    span: (start, end),
                });
            }
        }
    };

    for (start, seg) in text.split_word_bound_indices() {
        if seg.chars().any(char::is_alphanumeric) {
            let (word, possessive) = match seg
                .strip_suffix("'s")
                .or_else(|| seg.strip_suffix("\u{2019}s"))
            {
                Some(w) if !w.is_empty() => (w, true),
                _ => (seg, false),
            };
            let capitalized = word.chars().next().is_some_and(char::is_uppercase);
            if capitalized && !is_stopword(&word.to_lowercase()) {
                let end = start + word.len();
                match &mut run {
                    Some(r) => {
                        r.1 = end;
                        r.2 += 1;
                    }
                    None => run = Some((start, end, 1, sentence_start)),
                }
                if possessive {
                    close(&mut run);
                }
            } else {
                close(&mut run);
            }
            sentence_start = false;
        } else if seg.chars().all(char::is_whitespace) {
            if seg.contains('\n') {
                close(&mut run);
                sentence_start = true;
            }
        } else {
            close(&mut run);
            if seg.contains(['.', '!', '?']) {
                sentence_start = true;
            }
        }
    }
    close(&mut run);
    out
}

#[derive(Debug, Clone)]
pub struct ReferenceNer {
    handle: BackendHandle,
}

impl ReferenceNer {
    pub fn new() -> Self {
        Self {
            handle: BackendHandle::reference("reference-ner", &[Capability::Ner]),
        }
    }
}

impl Default for ReferenceNer {
    fn default() -> Self {
        Self::new()
    }
}

impl EntityRecognizer for ReferenceNer {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn recognize(&self, texts: &[&str]) -> Result<Vec<Vec<EntityMention>>> {
        Ok(texts.iter().map(|t| reference_ner(t)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(text: &str) -> Vec<String> {
        reference_ner(text).into_iter().map(|m| m.text).collect()
    }

    #[test]
    fn multiword_run() {
        let m = reference_ner("I bought John Deere parts");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].text, "John Deere");
        assert_eq!(m[0].span, (9, 19));
        assert_eq!(m[0].entity_type, EntityType::Other);
    }

    #[test]
    fn sentence_initial_single_word_ignored() {
        assert!(reference_ner("Great harvest this year").is_empty());
        assert!(reference_ner("").is_empty());
        assert_eq!(names("Rain today. Monsanto called"), Vec::<String>::new());
        assert_eq!(names("Great Plains farmers agree"), ["Great Plains"]);
    }

    #[test]
    fn stopwords_and_punctuation_break_runs() {
        assert_eq!(
            names("we met The Monsanto Company, Bayer and China"),
            ["Monsanto Company", "Bayer", "China"]
        );
        assert_eq!(names("ask about Monsanto's seeds"), ["Monsanto"]);
    }

    #[test]
    fn spans_point_into_source() {
        let text = "Prices in China and at John Deere dealers";
        for m in reference_ner(text) {
            assert!(m.span.0 < m.span.1 && m.span.1 <= text.len());
            assert_eq!(&text[m.span.0..m.span.1], m.text);
        }
    }
}
