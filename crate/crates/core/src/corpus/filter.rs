use std::collections::HashSet;
use std::path::Path;

use unicode_normalization::UnicodeNormalization;

use super::{CorpusError, Post};

/// Shipped when no keyword file is given: misinformation, fabrication and
/// untrue, in Japanese and English.
pub const DEFAULT_KEYWORDS: [&str; 6] = ["誤報", "捏造", "事実無根", "misinformation", "fabrication", "untrue"];

/// Validated candidate-filter keywords.
///
/// Terms are stored NFC-normalized. Terms from a cased script are matched
/// case-insensitively; everything else is an exact substring match.
#[derive(Clone, Debug, PartialEq)]
pub struct KeywordList {
    terms: Vec<String>,
    folded: Vec<Option<String>>,
}

impl KeywordList {
    pub fn new(terms: Vec<String>) -> Result<Self, CorpusError> {
        if terms.is_empty() {
            return Err(CorpusError::EmptyKeywordList);
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(terms.len());
        for term in terms {
            let t: String = term.nfc().collect();
            if t.is_empty() {
                return Err(CorpusError::EmptyKeyword);
            }
            if !seen.insert(t.clone()) {
                return Err(CorpusError::DuplicateKeyword(t));
            }
            normalized.push(t);
        }
        let folded = normalized
            .iter()
            .map(|t| is_cased(t).then(|| t.to_lowercase()))
            .collect();
        Ok(KeywordList {
            terms: normalized,
            folded,
        })
    }

    /// One keyword per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self, CorpusError> {
        let terms = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        Self::new(terms)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, CorpusError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn matches(&self, text: &str) -> bool {
        let text: String = text.nfc().collect();
        let mut lowered: Option<String> = None;
        self.terms.iter().zip(&self.folded).any(|(term, folded)| match folded {
            None => text.contains(term.as_str()),
            Some(f) => lowered.get_or_insert_with(|| text.to_lowercase()).contains(f.as_str()),
        })
    }
}

impl Default for KeywordList {
    fn default() -> Self {
        Self::new(DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()).expect("defaults are valid")
    }
}

fn is_cased(term: &str) -> bool {
    term.chars().any(|c| c.is_lowercase() || c.is_uppercase())
}

/// Keeps the posts whose raw text contains at least one keyword; order is preserved.
pub fn filter_candidates(posts: &[Post], keywords: &KeywordList) -> Vec<Post> {
    posts
        .iter()
        .filter(|p| keywords.matches(&p.raw_text))
        .cloned()
        .collect()
}

/// Every keyword occurrence in `text` as half-open character offsets into the
/// NFC form of the text, sorted by start then end.
pub fn keyword_spans(text: &str, keywords: &KeywordList) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.nfc().collect();
    let mut spans = Vec::new();
    for (term, folded) in keywords.terms.iter().zip(&keywords.folded) {
        let needle: Vec<char> = term.chars().collect();
        let fold = folded.is_some();
        if needle.len() > chars.len() {
            continue;
        }
        for start in 0..=chars.len() - needle.len() {
            let hit = needle.iter().enumerate().all(|(k, &n)| {
                let c = chars[start + k];
                if fold {
                    c.to_lowercase().eq(n.to_lowercase())
                } else {
                    c == n
                }
            });
            if hit {
                spans.push((start, start + needle.len()));
            }
        }
    }
    spans.sort_unstable();
    spans.dedup();
    spans
}
