//! Sensitive-term screening with a multi-pattern automaton.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::automaton::{wants_boundary, Automaton, RawMatch};

/// Category whose terms are matched but never count toward toxicity.
pub const MEDICAL_WHITELIST: &str = "medical_whitelist";

const DEFAULT_LEXICON: &str = include_str!("../../data/lexicon/default.tsv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub term: String,
    pub category: String,
    pub weight: f64,
}

/// Weight given to a category when the lexicon does not set one.
pub fn default_category_weight(category: &str) -> f64 {
    if category == MEDICAL_WHITELIST {
        0.0
    } else {
        1.0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LexiconError {
    #[error("empty term on line {0}")]
    EmptyTerm(usize),
    #[error("duplicate term {term:?} in category {category:?}")]
    Duplicate { term: String, category: String },
    #[error("invalid weight {weight:?} for term {term:?}: must be a finite number >= 0")]
    BadWeight { term: String, weight: String },
    #[error("line {line}: expected `term<TAB>category[<TAB>weight]`")]
    Malformed { line: usize },
    #[error("reading lexicon {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One lexicon hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconMatch {
    pub pattern: String,
    pub category: String,
    /// Byte offset of the match start.
    pub offset: usize,
    pub weight: f64,
}

/// Compiled lexicon. Alphabetic-script terms match on word boundaries only;
/// terms in unsegmented scripts match anywhere. Matching ignores case.
#[derive(Debug, Clone)]
pub struct LexiconMatcher {
    entries: Vec<LexiconEntry>,
    automaton: Automaton,
}

/// Build a matcher from `(term, category)` pairs with default category weights.
pub fn compile_lexicon<T: AsRef<str>, C: AsRef<str>>(patterns: &[(T, C)]) -> Result<LexiconMatcher, LexiconError> {
    LexiconMatcher::new(
        patterns
            .iter()
            .map(|(t, c)| LexiconEntry {
                term: t.as_ref().to_string(),
                category: c.as_ref().to_string(),
                weight: default_category_weight(c.as_ref()),
            })
            .collect(),
    )
}

impl LexiconMatcher {
    pub fn new(entries: Vec<LexiconEntry>) -> Result<Self, LexiconError> {
        Self::with_boundaries(entries, true)
    }

    /// `word_boundaries = false` lets alphabetic terms match inside words too.
    pub fn with_boundaries(entries: Vec<LexiconEntry>, word_boundaries: bool) -> Result<Self, LexiconError> {
        let mut seen = HashSet::new();
        for (i, e) in entries.iter().enumerate() {
            if e.term.trim().is_empty() {
                return Err(LexiconError::EmptyTerm(i + 1));
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                return Err(LexiconError::BadWeight {
                    term: e.term.clone(),
                    weight: e.weight.to_string(),
                });
            }
            if !seen.insert((e.term.to_lowercase(), e.category.as_str())) {
                return Err(LexiconError::Duplicate {
                    term: e.term.clone(),
                    category: e.category.clone(),
                });
            }
        }
        let patterns: Vec<(&str, bool)> = entries
            .iter()
            .map(|e| (e.term.as_str(), word_boundaries && wants_boundary(&e.term)))
            .collect();
        let automaton = Automaton::new(&patterns, true);
        Ok(Self { entries, automaton })
    }

    /// The bundled starter lexicon.
    pub fn bundled() -> Self {
        Self::new(parse_lexicon_tsv(DEFAULT_LEXICON).expect("bundled lexicon parses"))
            .expect("bundled lexicon is valid")
    }

    pub fn from_tsv(text: &str) -> Result<Self, LexiconError> {
        Self::new(parse_lexicon_tsv(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_tsv(&text)
    }

    pub fn entries(&self) -> &[LexiconEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn resolve(&self, m: RawMatch) -> LexiconMatch {
        let e = &self.entries[m.pattern];
        LexiconMatch {
            pattern: e.term.clone(),
            category: e.category.clone(),
            offset: m.start,
            weight: e.weight,
        }
    }

    /// Every occurrence of every term, overlapping ones included, in
    /// ascending offset order.
    pub fn scan(&self, text: &str) -> Vec<LexiconMatch> {
        self.automaton
            .find_all(text)
            .into_iter()
            .map(|m| self.resolve(m))
            .collect()
    }

    /// Scan text delivered in pieces. Offsets refer to the concatenation and
    /// the result equals `scan` on the whole text.
    pub fn scan_chunks<'a>(&self, chunks: impl IntoIterator<Item = &'a str>) -> Vec<LexiconMatch> {
        let mut stream = self.automaton.stream();
        let mut raw = Vec::new();
        for chunk in chunks {
            raw.extend(stream.feed(chunk));
        }
        raw.extend(stream.finish());
        raw.sort();
        raw.into_iter().map(|m| self.resolve(m)).collect()
    }
}

/// Parse `term<TAB>category[<TAB>weight]` lines. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_lexicon_tsv(text: &str) -> Result<Vec<LexiconEntry>, LexiconError> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let (term, category) = match cols.as_slice() {
            [t, c] | [t, c, _] => (t.trim(), c.trim()),
            _ => return Err(LexiconError::Malformed { line: n + 1 }),
        };
        if term.is_empty() {
            return Err(LexiconError::EmptyTerm(n + 1));
        }
        if category.is_empty() {
            return Err(LexiconError::Malformed { line: n + 1 });
        }
        let weight = match cols.get(2) {
            Some(w) => w.trim().parse::<f64>().map_err(|_| LexiconError::BadWeight {
                term: term.to_string(),
                weight: w.to_string(),
            })?,
            None => default_category_weight(category),
        };
        out.push(LexiconEntry {
            term: term.to_string(),
            category: category.to_string(),
            weight,
        });
    }
    Ok(out)
}
