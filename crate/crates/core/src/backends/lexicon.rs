//! Rule-based argument and stance classifier.
//!
//! A post argues about aspect `A` when it mentions a keyword of `A`, contains
//! at least one premise marker, and its stance cue counts differ. The stance
//! is the sign of `positive - negative`.

use std::fs;
use std::path::Path;

use super::{
    aspect_matchers, choose_aspect, ArgumentLabel, BackendHandle, Capability, Stance,
    StanceClassifier,
};
use crate::corpus::Post;
use crate::error::{Error, Result};
use crate::relevance::Aspect;
use crate::text::{lower_words, KeywordMatcher};
use crate::workspace::{write_atomic, Workspace};

pub const PREMISE_MARKERS: &[&str] = &[
    "because",
    "since",
    "therefore",
    "so",
    "as a result",
    "thus",
    "hence",
    "due to",
    "given that",
    "consequently",
    "which means",
    "that is why",
    "for example",
    "leads to",
];

pub const POSITIVE_CUES: &[&str] = &[
    "help",
    "helps",
    "helped",
    "helpful",
    "benefit",
    "benefits",
    "beneficial",
    "safe",
    "safer",
    "improve",
    "improves",
    "improved",
    "good",
    "better",
    "healthy",
    "efficient",
    "effective",
    "sustainable",
    "cheaper",
    "useful",
    "valuable",
    "advantage",
    "innovation",
    "progress",
    "protect",
    "protects",
    "resilient",
    "support",
    "feed",
    "boost",
    "boosts",
];

pub const NEGATIVE_CUES: &[&str] = &[
    "cancer",
    "avoid",
    "harm",
    "harms",
    "harmful",
    "dangerous",
    "danger",
    "toxic",
    "bad",
    "worse",
    "damage",
    "damages",
    "destroy",
    "destroys",
    "risk",
    "risky",
    "poison",
    "unsafe",
    "kill",
    "kills",
    "evil",
    "greed",
    "greedy",
    "monopoly",
    "fail",
    "fails",
    "failure",
    "problem",
    "problems",
    "pollution",
    "pollute",
    "ban",
];

/// The three term lists behind [`LexiconClassifier`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicons {
    pub premise_markers: Vec<String>,
    pub positive_cues: Vec<String>,
    pub negative_cues: Vec<String>,
}

impl Default for Lexicons {
    fn default() -> Self {
        let own = |l: &[&str]| l.iter().map(|s| s.to_string()).collect();
        Self {
            premise_markers: own(PREMISE_MARKERS),
            positive_cues: own(POSITIVE_CUES),
            negative_cues: own(NEGATIVE_CUES),
        }
    }
}

impl Lexicons {
    const FILES: [&'static str; 3] = ["premise_markers", "positive_cues", "negative_cues"];

    fn lists(&self) -> [&Vec<String>; 3] {
        [
            &self.premise_markers,
            &self.positive_cues,
            &self.negative_cues,
        ]
    }

    /// Reads `ws/lexicons/*.txt`, writing the defaults for any missing file.
    pub fn load_or_init(ws: &Workspace) -> Result<Self> {
        let defaults = Self::default();
        let mut lists = Vec::new();
        for (name, default) in Self::FILES.iter().zip(defaults.lists()) {
            let path = ws.lexicon_path(name);
            if path.exists() {
                lists.push(read_terms(&path)?);
            } else {
                let mut body = default.join("\n");
                body.push('\n');
                write_atomic(&path, body.as_bytes())?;
                lists.push(default.clone());
            }
        }
        let [premise_markers, positive_cues, negative_cues]: [Vec<String>; 3] =
            lists.try_into().expect("three lexicons");
        Ok(Self {
            premise_markers,
            positive_cues,
            negative_cues,
        })
    }
}

fn read_terms(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}

#[derive(Debug, Clone)]
pub struct LexiconClassifier {
    handle: BackendHandle,
    markers: KeywordMatcher,
    positive: KeywordMatcher,
    negative: KeywordMatcher,
}

impl LexiconClassifier {
    pub fn new(lexicons: &Lexicons) -> Self {
        Self {
            handle: BackendHandle::reference("lexicon", &[Capability::Classify]),
            markers: KeywordMatcher::new(&lexicons.premise_markers),
            positive: KeywordMatcher::new(&lexicons.positive_cues),
            negative: KeywordMatcher::new(&lexicons.negative_cues),
        }
    }

    /// Signed cue balance, `positive - negative`.
    pub fn cue_balance(&self, words: &[(String, usize)]) -> i64 {
        self.positive.count_in(words) as i64 - self.negative.count_in(words) as i64
    }

    pub fn label_text(
        &self,
        post_id: &str,
        text: &str,
        matchers: &[(String, KeywordMatcher)],
    ) -> ArgumentLabel {
        let words = lower_words(text);
        let aspect = choose_aspect(&words, matchers).map(str::to_string);
        let stance = match &aspect {
            Some(_) if self.markers.first_match_in(&words).is_some() => {
                match self.cue_balance(&words) {
                    b if b > 0 => Stance::For,
                    b if b < 0 => Stance::Against,
                    _ => Stance::None,
                }
            }
            _ => Stance::None,
        };
        ArgumentLabel {
            post_id: post_id.to_string(),
            aspect,
            stance,
            confidence: 1.0,
            backend_id: self.handle.backend_id.clone(),
        }
    }
}

impl Default for LexiconClassifier {
    fn default() -> Self {
        Self::new(&Lexicons::default())
    }
}

impl StanceClassifier for LexiconClassifier {
    fn handle(&self) -> &BackendHandle {
        &self.handle
    }

    fn classify(&self, posts: &[Post], aspects: &[Aspect]) -> Result<Vec<ArgumentLabel>> {
        if aspects.is_empty() {
            return Err(Error::Invalid(
                "classification needs at least one aspect".into(),
            ));
        }
        let matchers = aspect_matchers(aspects);
        Ok(posts
            .iter()
            .map(|p| self.label_text(&p.post_id, &p.text(), &matchers))
            .collect())
    }
}
