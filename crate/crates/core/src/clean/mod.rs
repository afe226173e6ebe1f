//! Heuristic multi-level cleaning.
//!
//! Rules run char → word → line → chapter. Each level sees the output of the
//! previous one, and chapter statistics are measured on the text that
//! survived line filtering.

pub mod rules;

use std::collections::HashSet;

use regex::Regex;

use crate::automaton::{wants_boundary, Automaton};
use crate::corpus::{Document, Taxonomy};
use crate::text::{is_han, is_non_printable, is_zero_width};
pub use rules::{load_lexicon, load_rules, parse_rules, Action, CleanRule, Level, RuleError, RuleParams};

/// Drop reason used when cleaning leaves nothing behind.
pub const EMPTY_AFTER_CLEANING: &str = "empty_after_cleaning";

const DEFAULT_RULES_JSON: &str = include_str!("../../data/rules/default_rules.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Kept,
    Dropped,
}

/// Result of running a rule set over one document.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub verdict: Verdict,
    pub doc: Option<Document>,
    /// Rules that changed or rejected something, with how often they fired.
    pub fired: Vec<(String, usize)>,
    pub drop_reason: Option<String>,
}

#[derive(Debug)]
enum Matcher {
    None,
    Regex(Regex),
    Lexicon(Automaton),
}

#[derive(Debug)]
struct Compiled {
    rule: CleanRule,
    matcher: Matcher,
}

/// A validated, ready-to-run rule list. Immutable and shareable across threads.
#[derive(Debug)]
pub struct RuleSet {
    rules: Vec<Compiled>,
}

impl RuleSet {
    /// Validate and compile. Fails on the first invalid rule.
    pub fn compile(rules: Vec<CleanRule>) -> Result<Self, RuleError> {
        let mut seen = HashSet::new();
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            if !seen.insert(rule.id.clone()) {
                return Err(RuleError::DuplicateId(rule.id));
            }
            let matcher = validate(&rule)?;
            compiled.push(Compiled { rule, matcher });
        }
        Ok(Self { rules: compiled })
    }

    pub fn rules(&self) -> impl Iterator<Item = &CleanRule> {
        self.rules.iter().map(|c| &c.rule)
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

fn validate(rule: &CleanRule) -> Result<Matcher, RuleError> {
    use Action::*;
    use Level::*;
    use RuleParams as P;
    let id = rule.id.as_str();
    let bad = |reason: &str| Err(RuleError::invalid(id, reason));

    let level_ok = match rule.level {
        Chapter => rule.action == DropDoc,
        Line => rule.action == DropLine,
        // Word rules may also take out the whole line containing the hit.
        Word => matches!(rule.action, RemoveMatch | ReplaceMatch | DropLine),
        Char => matches!(rule.action, RemoveMatch | ReplaceMatch),
    };
    if !level_ok {
        return bad(&format!(
            "action {:?} is not allowed at level {:?}",
            rule.action, rule.level
        ));
    }

    let kind_ok = match &rule.params {
        P::StripZeroWidth | P::StripControl => rule.level == Char && rule.action == RemoveMatch,
        P::CollapseRepeats { .. } => rule.level == Char && rule.action == ReplaceMatch,
        P::Pattern { .. } => true,
        P::AdTrigger { .. } => rule.level == Word,
        P::SymbolRatio { .. } | P::ShortPunctLine { .. } => rule.level == Line,
        P::GarbledRatio { .. } | P::MeanLineLength { .. } | P::AlphaFraction { .. } | P::MinLength { .. } => {
            rule.level == Chapter
        }
    };
    if !kind_ok {
        return bad("rule kind does not fit its level/action");
    }

    let ratio_ok = |x: f64| x.is_finite() && x >= 0.0;
    match &rule.params {
        P::CollapseRepeats { max_run, keep } => {
            if *max_run == 0 || *keep == 0 || keep > max_run {
                return bad("collapse_repeats needs 0 < keep <= max_run");
            }
        }
        P::Pattern { regex, replacement } => {
            if rule.action == RemoveMatch && !replacement.is_empty() {
                return bad("remove_match takes no replacement");
            }
            let re = Regex::new(regex).map_err(|e| RuleError::invalid(id, e.to_string()))?;
            return Ok(Matcher::Regex(re));
        }
        P::AdTrigger { lexicon, lexicon_file } => {
            if lexicon_file.is_some() {
                return bad("lexicon_file must be resolved with load_rules before compiling");
            }
            if lexicon.is_empty() || lexicon.iter().any(|t| t.trim().is_empty()) {
                return bad("ad_trigger lexicon must be non-empty and contain no blank terms");
            }
            let patterns: Vec<(&str, bool)> = lexicon.iter().map(|t| (t.as_str(), wants_boundary(t))).collect();
            return Ok(Matcher::Lexicon(Automaton::new(&patterns, true)));
        }
        P::SymbolRatio { max } | P::GarbledRatio { max } => {
            if !ratio_ok(*max) {
                return bad("threshold must be a non-negative number");
            }
        }
        P::AlphaFraction { min } => {
            if !ratio_ok(*min) || *min > 1.0 {
                return bad("alpha_fraction.min must be in [0, 1]");
            }
        }
        P::MeanLineLength { min } => {
            if !ratio_ok(*min) {
                return bad("mean_line_length.min must be non-negative");
            }
        }
        P::ShortPunctLine { max_len } => {
            if *max_len == 0 {
                return bad("short_punct_line.max_len must be positive");
            }
        }
        P::StripZeroWidth | P::StripControl | P::MinLength { .. } => {}
    }
    Ok(Matcher::None)
}

/// The bundled rules, unfiltered.
pub fn bundled_rules() -> Vec<CleanRule> {
    parse_rules(DEFAULT_RULES_JSON).expect("bundled rule file is valid")
}

/// The bundled default rules that apply to `source`.
pub fn default_ruleset(source: &str, taxonomy: &Taxonomy) -> Result<Vec<CleanRule>, RuleError> {
    if !taxonomy.contains(source) {
        return Err(RuleError::UnknownSource(source.to_string()));
    }
    Ok(bundled_rules().into_iter().filter(|r| r.applies(source)).collect())
}

/// Run `rules` over `doc`. Rules whose `applies_to`/`except` exclude the
/// document's source are skipped.
pub fn apply_rules(doc: &Document, rules: &RuleSet) -> CleanOutcome {
    let mut fired = Vec::new();
    let mut content = doc.content.clone();
    let active = |level: Level| {
        rules
            .rules
            .iter()
            .filter(move |c| c.rule.level == level && c.rule.applies(&doc.source))
    };

    for c in active(Level::Char).chain(active(Level::Word)) {
        let count = if c.rule.action == Action::DropLine {
            let (text, n) = drop_lines(&content, |line| line_hit(c, line));
            content = text;
            n
        } else {
            let (text, n) = rewrite(c, &content);
            content = text;
            n
        };
        if count > 0 {
            fired.push((c.rule.id.clone(), count));
        }
    }

    for c in active(Level::Line) {
        let (text, n) = drop_lines(&content, |line| line_hit(c, line));
        content = text;
        if n > 0 {
            fired.push((c.rule.id.clone(), n));
        }
    }

    if content.trim().is_empty() {
        return dropped(fired, EMPTY_AFTER_CLEANING.to_string());
    }

    let stats = ChapterStats::of(&content);
    for c in active(Level::Chapter) {
        if chapter_hit(c, &content, &stats) {
            fired.push((c.rule.id.clone(), 1));
            return dropped(fired, c.rule.id.clone());
        }
    }

    let mut out = doc.clone();
    out.content = content;
    CleanOutcome {
        verdict: Verdict::Kept,
        doc: Some(out),
        fired,
        drop_reason: None,
    }
}

fn dropped(fired: Vec<(String, usize)>, reason: String) -> CleanOutcome {
    CleanOutcome {
        verdict: Verdict::Dropped,
        doc: None,
        fired,
        drop_reason: Some(reason),
    }
}

/// Apply a char/word rewrite rule, returning the new text and hit count.
fn rewrite(c: &Compiled, text: &str) -> (String, usize) {
    match (&c.rule.params, &c.matcher) {
        (RuleParams::StripZeroWidth, _) => remove_chars(text, is_zero_width),
        (RuleParams::StripControl, _) => remove_chars(text, |ch| ch.is_control() && ch != '\n' && ch != '\t'),
        (RuleParams::CollapseRepeats { max_run, keep }, _) => collapse_repeats(text, *max_run, *keep),
        (RuleParams::Pattern { replacement, .. }, Matcher::Regex(re)) => {
            let n = re.find_iter(text).count();
            if n == 0 {
                return (text.to_string(), 0);
            }
            (re.replace_all(text, regex::NoExpand(replacement)).into_owned(), n)
        }
        (RuleParams::AdTrigger { .. }, Matcher::Lexicon(ac)) => {
            let hits = ac.find_all(text);
            if hits.is_empty() {
                return (text.to_string(), 0);
            }
            let mut out = String::with_capacity(text.len());
            let mut cursor = 0;
            for m in &hits {
                if m.start > cursor {
                    out.push_str(&text[cursor..m.start]);
                }
                cursor = cursor.max(m.end);
            }
            out.push_str(&text[cursor..]);
            (out, hits.len())
        }
        _ => (text.to_string(), 0),
    }
}

fn remove_chars(text: &str, pred: impl Fn(char) -> bool) -> (String, usize) {
    let mut n = 0;
    let out: String = text
        .chars()
        .filter(|&c| {
            let hit = pred(c);
            n += hit as usize;
            !hit
        })
        .collect();
    (out, n)
}

fn collapse_repeats(text: &str, max_run: usize, keep: usize) -> (String, usize) {
    let mut out = String::with_capacity(text.len());
    let mut collapsed = 0;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        let mut run = 1;
        while chars.peek() == Some(&c) {
            chars.next();
            run += 1;
        }
        let emit = if c != '\n' && run > max_run {
            collapsed += 1;
            keep
        } else {
            run
        };
        out.extend(std::iter::repeat_n(c, emit));
    }
    (out, collapsed)
}

fn drop_lines(text: &str, hit: impl Fn(&str) -> bool) -> (String, usize) {
    let mut dropped = 0;
    let kept: Vec<&str> = text
        .split('\n')
        .filter(|line| {
            let h = hit(line);
            dropped += h as usize;
            !h
        })
        .collect();
    if dropped == 0 {
        return (text.to_string(), 0);
    }
    (kept.join("\n"), dropped)
}

fn is_symbol(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

fn line_hit(c: &Compiled, line: &str) -> bool {
    let trimmed = line.trim();
    match (&c.rule.params, &c.matcher) {
        (_, Matcher::Regex(re)) => re.is_match(line),
        (_, Matcher::Lexicon(ac)) => ac.is_match(line),
        (RuleParams::SymbolRatio { max }, _) => {
            if trimmed.is_empty() {
                return false;
            }
            let symbols = trimmed.chars().filter(|&ch| is_symbol(ch)).count();
            let alnum = trimmed.chars().filter(|ch| ch.is_alphanumeric()).count();
            if alnum == 0 {
                symbols > 0
            } else {
                symbols as f64 / alnum as f64 > *max
            }
        }
        (RuleParams::ShortPunctLine { max_len }, _) => {
            !trimmed.is_empty() && trimmed.chars().count() < *max_len && trimmed.chars().all(is_symbol)
        }
        _ => false,
    }
}

/// Whole-document measurements used by chapter rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChapterStats {
    pub chars: usize,
    pub garbled_ratio: f64,
    pub mean_line_length: f64,
    pub alpha_fraction: f64,
}

impl ChapterStats {
    pub fn of(text: &str) -> Self {
        let chars = text.chars().count();
        let garbled = text.chars().filter(|&c| is_non_printable(c)).count();
        let (line_chars, lines) = text
            .split('\n')
            .filter(|l| !l.trim().is_empty())
            .fold((0usize, 0usize), |(n, k), l| (n + l.chars().count(), k + 1));
        let non_ws = text.chars().filter(|c| !c.is_whitespace()).count();
        let alpha = text.chars().filter(|&c| c.is_alphabetic() || is_han(c)).count();
        Self {
            chars,
            garbled_ratio: ratio(garbled, chars),
            mean_line_length: ratio(line_chars, lines),
            alpha_fraction: ratio(alpha, non_ws),
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn chapter_hit(c: &Compiled, text: &str, s: &ChapterStats) -> bool {
    match (&c.rule.params, &c.matcher) {
        (_, Matcher::Regex(re)) => re.is_match(text),
        (RuleParams::GarbledRatio { max }, _) => s.garbled_ratio > *max,
        (RuleParams::MeanLineLength { min }, _) => s.mean_line_length < *min,
        (RuleParams::AlphaFraction { min }, _) => s.alpha_fraction < *min,
        (RuleParams::MinLength { min_chars }, _) => text.trim().chars().count() < *min_chars,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rule(id: &str, level: Level, action: Action, params: RuleParams) -> CleanRule {
        CleanRule {
            id: id.into(),
            level,
            applies_to: vec![],
            except: vec![],
            action,
            params,
        }
    }

    fn ruleset(rules: Vec<CleanRule>) -> RuleSet {
        RuleSet::compile(rules).unwrap()
    }

    #[test]
    fn zero_width_is_stripped() {
        let rs = ruleset(vec![rule(
            "strip_zero_width",
            Level::Char,
            Action::RemoveMatch,
            RuleParams::StripZeroWidth,
        )]);
        let out = apply_rules(&Document::new("d", "web", "he\u{200b}llo\u{200b}"), &rs);
        assert_eq!(out.verdict, Verdict::Kept);
        assert_eq!(out.doc.unwrap().content, "hello");
        assert_eq!(out.fired, vec![("strip_zero_width".to_string(), 2)]);
    }

    #[test]
    fn garbled_document_is_dropped() {
        // 60 non-printable out of 100 characters.
        let content: String = std::iter::repeat_n('\u{0007}', 30)
            .chain(std::iter::repeat_n('\u{FFFD}', 30))
            .chain(std::iter::repeat_n('a', 40))
            .collect();
        let chars = content.chars().count();
        let garbled = content.chars().filter(|&c| c.is_control() || c == '\u{FFFD}').count();
        assert_eq!(garbled as f64 / chars as f64, 0.60);
        let rs = ruleset(vec![rule(
            "garbled_ratio",
            Level::Chapter,
            Action::DropDoc,
            RuleParams::GarbledRatio { max: 0.30 },
        )]);
        let out = apply_rules(&Document::new("d", "web", content), &rs);
        assert_eq!(out.verdict, Verdict::Dropped);
        assert_eq!(out.drop_reason.as_deref(), Some("garbled_ratio"));
        assert!(out.doc.is_none());
    }

    #[test]
    fn ad_trigger_drops_the_line() {
        let rs = ruleset(vec![rule(
            "ad_trigger",
            Level::Word,
            Action::DropLine,
            RuleParams::AdTrigger {
                lexicon: vec!["click here".into(), "buy now".into()],
                lexicon_file: None,
            },
        )]);
        let doc = Document::new("d", "web", "first line\nCLICK HERE TO BUY NOW\nlast line");
        let out = apply_rules(&doc, &rs);
        assert_eq!(out.doc.unwrap().content, "first line\nlast line");
        assert_eq!(out.fired, vec![("ad_trigger".to_string(), 1)]);
    }

    #[test]
    fn ad_trigger_remove_match() {
        let rs = ruleset(vec![rule(
            "ad",
            Level::Word,
            Action::RemoveMatch,
            RuleParams::AdTrigger {
                lexicon: vec!["buy now".into(), "立即购买".into()],
                lexicon_file: None,
            },
        )]);
        let out = apply_rules(&Document::new("d", "web", "Shoes. Buy now! 新款立即购买"), &rs);
        assert_eq!(out.doc.unwrap().content, "Shoes. ! 新款");
    }

    #[test]
    fn level_order_is_char_word_line_chapter() {
        // The zero-width char hides the trigger until the char level removes it.
        let rs = ruleset(vec![
            rule(
                "min_length",
                Level::Chapter,
                Action::DropDoc,
                RuleParams::MinLength { min_chars: 5 },
            ),
            rule(
                "ad",
                Level::Word,
                Action::DropLine,
                RuleParams::AdTrigger {
                    lexicon: vec!["buy now".into()],
                    lexicon_file: None,
                },
            ),
            rule("zw", Level::Char, Action::RemoveMatch, RuleParams::StripZeroWidth),
        ]);
        let out = apply_rules(&Document::new("d", "web", "buy\u{200b} now\nkeep this line"), &rs);
        assert_eq!(out.doc.unwrap().content, "keep this line");
    }

    #[test]
    fn invalid_rules_fail_validation() {
        let bad = vec![rule(
            "x",
            Level::Chapter,
            Action::DropLine,
            RuleParams::MinLength { min_chars: 1 },
        )];
        assert!(RuleSet::compile(bad).is_err());
        let bad = vec![rule(
            "x",
            Level::Char,
            Action::RemoveMatch,
            RuleParams::Pattern {
                regex: "(".into(),
                replacement: String::new(),
            },
        )];
        assert!(RuleSet::compile(bad).is_err());
        let bad = vec![rule(
            "x",
            Level::Word,
            Action::DropLine,
            RuleParams::AdTrigger {
                lexicon: vec![],
                lexicon_file: None,
            },
        )];
        assert!(RuleSet::compile(bad).is_err());
        let dup = vec![
            rule("x", Level::Char, Action::RemoveMatch, RuleParams::StripZeroWidth),
            rule("x", Level::Char, Action::RemoveMatch, RuleParams::StripControl),
        ];
        assert!(matches!(RuleSet::compile(dup), Err(RuleError::DuplicateId(_))));
    }

    #[test]
    fn collapse_long_runs() {
        assert_eq!(collapse_repeats("a!!!!!!!!!!!b", 10, 1), ("a!b".to_string(), 1));
        assert_eq!(collapse_repeats("a!!!!!!!!!!b", 10, 1), ("a!!!!!!!!!!b".to_string(), 0));
        assert_eq!(collapse_repeats("\n\n\n\n\n\n\n\n\n\n\n\n", 10, 1).1, 0);
    }

    #[test]
    fn symbol_ratio_and_short_punct_lines() {
        let rs = RuleSet::compile(default_ruleset("news", &Taxonomy::default()).unwrap()).unwrap();
        let doc = Document::new(
            "d",
            "news",
            "The council met on Tuesday to discuss the new budget for schools.\n***\n#$%^&*()!@ ok\n--\nThe vote will take place next week after the public comments.",
        );
        let out = apply_rules(&doc, &rs);
        assert_eq!(
            out.doc.unwrap().content,
            "The council met on Tuesday to discuss the new budget for schools.\nThe vote will take place next week after the public comments."
        );
    }

    #[test]
    fn news_defaults_carry_garbled_threshold() {
        let rules = default_ruleset("news", &Taxonomy::default()).unwrap();
        let garbled = rules.iter().find(|r| r.id == "garbled_ratio").unwrap();
        assert_eq!(garbled.params, RuleParams::GarbledRatio { max: 0.30 });
    }

    #[test]
    fn code_is_exempt_from_symbol_ratio() {
        let rules = default_ruleset("code", &Taxonomy::default()).unwrap();
        assert!(rules
            .iter()
            .all(|r| !matches!(r.params, RuleParams::SymbolRatio { .. })));
        let news = default_ruleset("news", &Taxonomy::default()).unwrap();
        assert!(news.iter().any(|r| matches!(r.params, RuleParams::SymbolRatio { .. })));
    }

    #[test]
    fn char_rules_identical_across_sources() {
        let tax = Taxonomy::default();
        let char_rules = |s: &str| -> Vec<CleanRule> {
            default_ruleset(s, &tax)
                .unwrap()
                .into_iter()
                .filter(|r| r.level == Level::Char)
                .collect()
        };
        let reference = char_rules("web");
        assert!(!reference.is_empty());
        for source in tax.0.keys() {
            assert_eq!(char_rules(source), reference, "{source}");
        }
    }

    #[test]
    fn unknown_source_is_an_error() {
        assert!(matches!(
            default_ruleset("martian", &Taxonomy::default()),
            Err(RuleError::UnknownSource(_))
        ));
    }

    #[test]
    fn bundled_rules_compile_for_every_source() {
        let tax = Taxonomy::default();
        for source in tax.0.keys() {
            RuleSet::compile(default_ruleset(source, &tax).unwrap()).unwrap();
        }
    }

    proptest! {
        #[test]
        fn cleaning_is_idempotent_and_never_grows(
            lines in proptest::collection::vec("[a-zA-Z ,.!#\u{200b}\u{3000}中文]{0,60}", 1..8),
            source in proptest::sample::select(vec!["web", "news", "code", "book"]),
        ) {
            let rs = RuleSet::compile(default_ruleset(source, &Taxonomy::default()).unwrap()).unwrap();
            let doc = Document::new("d", source, lines.join("\n"));
            let first = apply_rules(&doc, &rs);
            if let Some(cleaned) = &first.doc {
                prop_assert!(cleaned.content.len() <= doc.content.len());
                prop_assert!(!cleaned.content.trim().is_empty());
                let second = apply_rules(cleaned, &rs);
                prop_assert_eq!(second.verdict, Verdict::Kept);
                prop_assert_eq!(second.doc.as_ref(), Some(cleaned));
            } else {
                prop_assert!(first.drop_reason.is_some());
            }
        }
    }
}
