//! Rule definitions and their on-disk form.

use std::path::Path;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Granularity a rule inspects. Rules run in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Char,
    Word,
    Line,
    Chapter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    DropDoc,
    DropLine,
    RemoveMatch,
    ReplaceMatch,
}

/// What a rule looks for, with its thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleParams {
    /// Zero-width and invisible formatting characters.
    StripZeroWidth,
    /// Control characters other than newline and tab.
    StripControl,
    /// Runs of one character longer than `max_run` shrink to `keep` copies.
    /// Newlines are left alone.
    CollapseRepeats {
        max_run: usize,
        #[serde(default = "one")]
        keep: usize,
    },
    /// Regular expression. Removes or replaces matches at char/word level,
    /// drops matching lines at line level, drops the document at chapter level.
    Pattern {
        regex: String,
        #[serde(default)]
        replacement: String,
    },
    /// Advertising trigger phrases, matched case-insensitively on word
    /// boundaries for alphabetic terms. `lexicon_file` holds one term per line.
    AdTrigger {
        #[serde(default)]
        lexicon: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lexicon_file: Option<String>,
    },
    /// Line symbol-to-alphanumeric ratio above `max`.
    SymbolRatio { max: f64 },
    /// Lines shorter than `max_len` characters made only of punctuation.
    ShortPunctLine { max_len: usize },
    /// Share of non-printable characters above `max`.
    GarbledRatio { max: f64 },
    /// Mean length of non-blank lines below `min` characters.
    MeanLineLength { min: f64 },
    /// Share of alphabetic (incl. Han) among non-whitespace characters below `min`.
    AlphaFraction { min: f64 },
    /// Content shorter than `min_chars` characters.
    MinLength { min_chars: usize },
}

fn one() -> usize {
    1
}

/// One heuristic cleaning rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct CleanRule {
    pub id: String,
    pub level: Level,
    /// Source categories the rule is limited to; empty means all.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub applies_to: Vec<String>,
    /// Source categories exempt from the rule.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub except: Vec<String>,
    pub action: Action,
    pub params: RuleParams,
}

impl CleanRule {
    pub fn applies(&self, source: &str) -> bool {
        (self.applies_to.is_empty() || self.applies_to.iter().any(|s| s == source))
            && !self.except.iter().any(|s| s == source)
    }
}

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("rule `{id}`: {reason}")]
    Invalid { id: String, reason: String },
    #[error("duplicate rule id `{0}`")]
    DuplicateId(String),
    #[error("rule config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("rule config: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown source category `{0}`")]
    UnknownSource(String),
}

impl RuleError {
    pub(crate) fn invalid(id: &str, reason: impl Into<String>) -> Self {
        RuleError::Invalid {
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}

/// Parse a JSON array of rules.
pub fn parse_rules(json: &str) -> Result<Vec<CleanRule>, RuleError> {
    Ok(serde_json::from_str(json)?)
}

/// Load a JSON rule file. Relative `lexicon_file` entries resolve against
/// the rule file's directory and are inlined into `lexicon`.
pub fn load_rules(path: &Path) -> Result<Vec<CleanRule>, RuleError> {
    let mut rules = parse_rules(&std::fs::read_to_string(path)?)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    for rule in &mut rules {
        if let RuleParams::AdTrigger { lexicon, lexicon_file } = &mut rule.params {
            if let Some(file) = lexicon_file.take() {
                lexicon.extend(load_lexicon(&base.join(file))?);
            }
        }
    }
    Ok(rules)
}

/// One pattern per line; blank lines and `#` comments are skipped.
pub fn load_lexicon(path: &Path) -> std::io::Result<Vec<String>> {
    Ok(parse_lexicon(&std::fs::read_to_string(path)?))
}

pub fn parse_lexicon(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}
