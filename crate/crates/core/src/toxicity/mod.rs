//! Two-stage toxicity filtering: lexicon density screening, then an optional
//! classifier for documents that pass the lexicon.

pub mod lexicon;
pub mod model;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, StageStats};
pub use lexicon::{compile_lexicon, parse_lexicon_tsv, LexiconEntry, LexiconError, LexiconMatch, LexiconMatcher};
pub use model::{train_classifier, FeatureSpec, Label, ModelError, ToxicityModel, ToxicityScorer, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ToxicityConfig {
    /// Flag when weighted matches per 1000 characters exceed this.
    pub max_matches: f64,
    /// Flag when the classifier score reaches this.
    pub score_threshold: f64,
}

impl Default for ToxicityConfig {
    fn default() -> Self {
        Self {
            max_matches: 1.0,
            score_threshold: 0.8,
        }
    }
}

impl ToxicityConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.max_matches >= 0.0 && self.max_matches.is_finite()) {
            return Err("max_matches must be a finite number >= 0".into());
        }
        if !(self.score_threshold > 0.0 && self.score_threshold < 1.0) {
            return Err("score_threshold must be in (0, 1)".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    FlaggedLexicon,
    FlaggedClassifier,
}

impl Verdict {
    pub fn is_flagged(self) -> bool {
        self != Verdict::Clean
    }

    pub fn drop_reason(self) -> Option<&'static str> {
        match self {
            Verdict::Clean => None,
            Verdict::FlaggedLexicon => Some("toxic_lexicon"),
            Verdict::FlaggedClassifier => Some("toxic_classifier"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToxicityVerdict {
    pub verdict: Verdict,
    pub matches: Vec<LexiconMatch>,
    /// Weighted matches per 1000 characters.
    pub density: f64,
    pub score: Option<f64>,
}

/// Weighted matches per 1000 characters.
pub fn match_density(matches: &[LexiconMatch], text: &str) -> f64 {
    let chars = text.chars().count();
    if chars == 0 {
        return 0.0;
    }
    matches.iter().fold(0.0, |acc, m| acc + m.weight) * 1000.0 / chars as f64
}

pub fn filter_toxic(
    doc: &Document,
    matcher: &LexiconMatcher,
    model: Option<&dyn ToxicityScorer>,
    cfg: &ToxicityConfig,
) -> ToxicityVerdict {
    let matches = matcher.scan(&doc.content);
    let density = match_density(&matches, &doc.content);
    if density > cfg.max_matches {
        return ToxicityVerdict {
            verdict: Verdict::FlaggedLexicon,
            matches,
            density,
            score: None,
        };
    }
    let score = model.map(|m| m.score(&doc.content));
    let verdict = match score {
        Some(s) if s >= cfg.score_threshold => Verdict::FlaggedClassifier,
        _ => Verdict::Clean,
    };
    ToxicityVerdict {
        verdict,
        matches,
        density,
        score,
    }
}

/// Filter a batch in parallel, keeping input order for survivors.
pub fn filter_documents(
    docs: Vec<Document>,
    matcher: &LexiconMatcher,
    model: Option<&dyn ToxicityScorer>,
    cfg: &ToxicityConfig,
    stats: &mut StageStats,
) -> Vec<Document> {
    let verdicts: Vec<Verdict> = docs
        .par_iter()
        .map(|d| filter_toxic(d, matcher, model, cfg).verdict)
        .collect();
    let mut kept = Vec::with_capacity(docs.len());
    for (doc, v) in docs.into_iter().zip(verdicts) {
        stats.record_in(doc.byte_len());
        match v.drop_reason() {
            Some(reason) => stats.record_drop(reason),
            None => {
                stats.record_out(doc.byte_len());
                kept.push(doc);
            }
        }
    }
    kept
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> Document {
        Document::new("d", "web", text)
    }

    #[test]
    fn clean_with_empty_lexicon() {
        let m = compile_lexicon::<&str, &str>(&[]).unwrap();
        let v = filter_toxic(&doc("a perfectly fine sentence"), &m, None, &ToxicityConfig::default());
        assert_eq!(v.verdict, Verdict::Clean);
        assert!(v.matches.is_empty());
    }

    #[test]
    fn dense_lexicon_hits_flag() {
        let m = compile_lexicon(&[("fake id", "illegal")]).unwrap();
        // 10 matches in exactly 100 characters.
        let text = "fake id + ".repeat(10);
        assert_eq!(text.chars().count(), 100);
        let v = filter_toxic(
            &doc(&text),
            &m,
            None,
            &ToxicityConfig {
                max_matches: 1.0,
                score_threshold: 0.8,
            },
        );
        assert_eq!(v.matches.len(), 10);
        assert_eq!(v.density, 10.0 * 1000.0 / 100.0);
        assert_eq!(v.verdict, Verdict::FlaggedLexicon);
    }

    #[test]
    fn whitelisted_terms_do_not_count() {
        let m = compile_lexicon(&[("breast cancer", lexicon::MEDICAL_WHITELIST)]).unwrap();
        let v = filter_toxic(
            &doc("breast cancer screening saves lives"),
            &m,
            None,
            &ToxicityConfig {
                max_matches: 0.0,
                score_threshold: 0.5,
            },
        );
        assert_eq!(v.matches.len(), 1);
        assert_eq!(v.verdict, Verdict::Clean);
    }

    #[test]
    fn classifier_flags_what_the_lexicon_misses() {
        let mut data = Vec::new();
        for i in 0..40 {
            data.push((format!("ordinary note {i} about the weather"), Label::Clean));
            data.push((format!("zzqv zzqv note {i} zzqv marker"), Label::Toxic));
        }
        let model = train_classifier(&data, &TrainConfig::default()).unwrap();
        let m = compile_lexicon::<&str, &str>(&[]).unwrap();
        let v = filter_toxic(
            &doc("zzqv zzqv zzqv zzqv"),
            &m,
            Some(&model),
            &ToxicityConfig::default(),
        );
        assert!(v.score.unwrap() >= 0.99, "{:?}", v.score);
        assert_eq!(v.verdict, Verdict::FlaggedClassifier);
        let ok = filter_toxic(
            &doc("ordinary weather note"),
            &m,
            Some(&model),
            &ToxicityConfig::default(),
        );
        assert_eq!(ok.verdict, Verdict::Clean);
    }

    #[test]
    fn filter_documents_counts_drops() {
        let m = compile_lexicon(&[("bad", "x")]).unwrap();
        let docs = vec![doc("bad bad"), doc("good text here")];
        let mut stats = StageStats::new("toxicity");
        let kept = filter_documents(docs, &m, None, &ToxicityConfig::default(), &mut stats);
        assert_eq!(kept.len(), 1);
        assert_eq!(stats.drop_reasons.get("toxic_lexicon"), Some(&1));
        assert!(stats.is_consistent());
    }
}
