//! Two-tier language identification.
//!
//! A Unicode-script pass settles scripts that belong to a single language
//! (Han, kana, Hangul). Everything else is ranked with the out-of-place
//! distance between character-trigram frequency rankings.

use std::collections::{BTreeMap, HashMap};

use crate::text::fold_char;

/// Default number of ranked trigrams kept per profile.
pub const DEFAULT_PROFILE_SIZE: usize = 300;

/// Texts shorter than this (in characters) are not classified.
pub const MIN_DETECT_CHARS: usize = 20;

/// Undetermined language tag.
pub const UNDETERMINED: &str = "und";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Script {
    Han,
    Kana,
    Hangul,
    Cyrillic,
    Arabic,
    Greek,
    Latin,
    Other,
}

impl Script {
    pub fn of(c: char) -> Option<Script> {
        if !c.is_alphabetic() {
            return None;
        }
        let cp = c as u32;
        let script = match cp {
            0x3040..=0x30FF | 0x31F0..=0x31FF | 0xFF66..=0xFF9D => Script::Kana,
            0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF | 0x20000..=0x2FA1F => Script::Han,
            0xAC00..=0xD7AF | 0x1100..=0x11FF | 0x3130..=0x318F => Script::Hangul,
            0x0400..=0x052F => Script::Cyrillic,
            0x0600..=0x06FF | 0x0750..=0x077F | 0xFB50..=0xFDFF | 0xFE70..=0xFEFF => Script::Arabic,
            0x0370..=0x03FF => Script::Greek,
            0x0041..=0x024F | 0x1E00..=0x1EFF => Script::Latin,
            _ => Script::Other,
        };
        Some(script)
    }
}

/// Letter counts per script.
#[derive(Debug, Default, Clone)]
struct ScriptCounts {
    counts: BTreeMap<Script, usize>,
    total: usize,
}

impl ScriptCounts {
    fn of(text: &str) -> Self {
        let mut out = ScriptCounts::default();
        for c in text.chars() {
            if let Some(s) = Script::of(c) {
                *out.counts.entry(s).or_insert(0) += 1;
                out.total += 1;
            }
        }
        out
    }

    fn get(&self, s: Script) -> usize {
        self.counts.get(&s).copied().unwrap_or(0)
    }

    /// The dominant script, folding Han and kana together when kana is a
    /// meaningful share (Japanese mixes both).
    fn dominant(&self) -> Option<Script> {
        if self.total == 0 {
            return None;
        }
        let han = self.get(Script::Han);
        let kana = self.get(Script::Kana);
        let cjk = han + kana;
        let mut best: Option<(Script, usize)> = None;
        for (&s, &n) in &self.counts {
            let (s, n) = match s {
                Script::Han | Script::Kana => {
                    if kana * 10 >= cjk && kana > 0 {
                        (Script::Kana, cjk)
                    } else {
                        (Script::Han, cjk)
                    }
                }
                _ => (s, n),
            };
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((s, n));
            }
        }
        best.map(|(s, _)| s)
    }

    fn share(&self, s: Script) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = match s {
            Script::Kana | Script::Han if self.dominant() == Some(s) => self.get(Script::Han) + self.get(Script::Kana),
            _ => self.get(s),
        };
        n as f64 / self.total as f64
    }
}

/// A language's top-K character trigrams by frequency, with rank 0 for the
/// most frequent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageProfile {
    pub lang: String,
    pub trigram_ranks: HashMap<String, usize>,
    script: Option<Script>,
}

impl LanguageProfile {
    pub fn new(lang: impl Into<String>, trigram_ranks: HashMap<String, usize>) -> Self {
        let script = profile_script(&trigram_ranks);
        Self {
            lang: lang.into(),
            trigram_ranks,
            script,
        }
    }

    /// Build a profile from seed text.
    pub fn from_text(lang: impl Into<String>, text: &str, k: usize) -> Self {
        let ranked = ranked_trigrams(text, k);
        let ranks = ranked.into_iter().enumerate().map(|(i, t)| (t, i)).collect();
        Self::new(lang, ranks)
    }

    /// Load from the on-disk form: a JSON object mapping trigram to rank.
    pub fn from_json(lang: impl Into<String>, json: &str) -> Result<Self, serde_json::Error> {
        let ranks: HashMap<String, usize> = serde_json::from_str(json)?;
        Ok(Self::new(lang, ranks))
    }

    /// JSON object mapping trigram to rank, keys in rank order.
    pub fn to_json(&self) -> String {
        let mut entries: Vec<(&String, &usize)> = self.trigram_ranks.iter().collect();
        entries.sort_by_key(|(t, r)| (**r, (*t).clone()));
        let mut out = String::from("{\n");
        for (i, (t, r)) in entries.iter().enumerate() {
            let key = serde_json::to_string(t).expect("string serializes");
            out.push_str(&format!("  {key}: {r}"));
            out.push_str(if i + 1 < entries.len() { ",\n" } else { "\n" });
        }
        out.push_str("}\n");
        out
    }

    pub fn script(&self) -> Option<Script> {
        self.script
    }
}

fn profile_script(ranks: &HashMap<String, usize>) -> Option<Script> {
    let mut text = String::new();
    for t in ranks.keys() {
        text.push_str(t);
    }
    ScriptCounts::of(&text).dominant()
}

/// Count space-padded character trigrams of each letter run.
pub fn trigram_counts(text: &str) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    let mut word: Vec<char> = vec![' '];
    let flush = |word: &mut Vec<char>, counts: &mut HashMap<String, u32>| {
        if word.len() > 1 {
            word.push(' ');
            for w in word.windows(3) {
                *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
            }
        }
        word.clear();
        word.push(' ');
    };
    for c in text.chars() {
        if c.is_alphabetic() {
            word.push(fold_char(c));
        } else {
            flush(&mut word, &mut counts);
        }
    }
    flush(&mut word, &mut counts);
    counts
}

/// Trigrams ordered by descending frequency, ties broken lexicographically,
/// truncated to `k`.
pub fn ranked_trigrams(text: &str, k: usize) -> Vec<String> {
    let mut entries = sorted_counts(text);
    entries.truncate(k);
    entries.into_iter().map(|(t, _)| t).collect()
}

fn sorted_counts(text: &str) -> Vec<(String, u32)> {
    let mut entries: Vec<(String, u32)> = trigram_counts(text).into_iter().collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries
}

/// A document's trigram ranking. Trigrams with equal counts share the rank
/// interval `[lo, hi]` of their tie group, so short texts (where almost
/// every trigram occurs once) are not penalized for an arbitrary order.
#[derive(Debug, Clone)]
pub struct DocRanking {
    entries: Vec<(String, usize, usize)>,
}

impl DocRanking {
    pub fn new(text: &str, k: usize) -> Self {
        Self::filtered(text, k, |_| true)
    }

    /// Ranking over the trigrams accepted by `keep` only.
    pub fn filtered(text: &str, k: usize, keep: impl Fn(&str) -> bool) -> Self {
        let mut counts = sorted_counts(text);
        counts.retain(|(t, _)| keep(t));
        counts.truncate(k);
        let mut entries = Vec::with_capacity(counts.len());
        let mut i = 0;
        while i < counts.len() {
            let mut j = i;
            while j + 1 < counts.len() && counts[j + 1].1 == counts[i].1 {
                j += 1;
            }
            for (t, _) in &counts[i..=j] {
                entries.push((t.clone(), i, j));
            }
            i = j + 1;
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Out-of-place distance between a document ranking and a profile.
pub fn out_of_place(doc: &DocRanking, profile: &LanguageProfile, max_penalty: usize) -> usize {
    doc.entries
        .iter()
        .map(|(t, lo, hi)| match profile.trigram_ranks.get(t) {
            Some(&r) if r < *lo => (lo - r).min(max_penalty),
            Some(&r) if r > *hi => (r - hi).min(max_penalty),
            Some(_) => 0,
            None => max_penalty,
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub lang: String,
    pub confidence: f64,
}

impl Detection {
    fn undetermined() -> Self {
        Self {
            lang: UNDETERMINED.to_string(),
            confidence: 0.0,
        }
    }
}

/// Classify `text` against `profiles`.
///
/// Returns `("und", 0.0)` for texts under twenty characters or without any
/// letters. When the script pass leaves exactly one candidate profile the
/// confidence is the share of letters in that script; otherwise it is
/// `1 - best / worst` where `worst = n * k`.
///
/// Only trigrams known to at least one candidate profile are ranked (`n`
/// counts those). An unknown trigram costs every candidate the same maximal
/// penalty, so dropping it never changes which profile wins; it only keeps
/// rare words from swamping the confidence of short texts.
pub fn detect_language(text: &str, profiles: &[LanguageProfile]) -> Detection {
    let k = profiles
        .iter()
        .map(|p| p.trigram_ranks.len())
        .max()
        .unwrap_or(DEFAULT_PROFILE_SIZE)
        .max(1);
    if profiles.is_empty() || text.chars().count() < MIN_DETECT_CHARS {
        return Detection::undetermined();
    }
    let scripts = ScriptCounts::of(text);
    let Some(dominant) = scripts.dominant() else {
        return Detection::undetermined();
    };

    let gated: Vec<&LanguageProfile> = profiles.iter().filter(|p| p.script == Some(dominant)).collect();
    if gated.len() == 1 {
        return Detection {
            lang: gated[0].lang.clone(),
            confidence: scripts.share(dominant),
        };
    }
    let candidates: Vec<&LanguageProfile> = if gated.is_empty() {
        profiles.iter().collect()
    } else {
        gated
    };

    let doc = DocRanking::filtered(text, k, |t| candidates.iter().any(|p| p.trigram_ranks.contains_key(t)));
    if doc.is_empty() {
        return Detection::undetermined();
    }
    let worst = doc.len() * k;
    let mut best: Option<(&LanguageProfile, usize)> = None;
    for p in candidates {
        let d = out_of_place(&doc, p, k);
        let better = match best {
            None => true,
            Some((bp, bd)) => d < bd || (d == bd && p.lang < bp.lang),
        };
        if better {
            best = Some((p, d));
        }
    }
    let (p, d) = best.expect("candidates non-empty");
    Detection {
        lang: p.lang.clone(),
        confidence: 1.0 - d as f64 / worst as f64,
    }
}

macro_rules! bundled {
    ($($lang:literal),* $(,)?) => {
        /// Languages with a bundled profile.
        pub const BUNDLED_LANGUAGES: &[&str] = &[$($lang),*];

        /// Seed texts the bundled profiles were built from.
        pub fn bundled_seed(lang: &str) -> Option<&'static str> {
            match lang {
                $($lang => Some(include_str!(concat!("../../data/seeds/", $lang, ".txt"))),)*
                _ => None,
            }
        }

        fn bundled_profile_json(lang: &str) -> Option<&'static str> {
            match lang {
                $($lang => Some(include_str!(concat!("../../data/profiles/", $lang, ".json"))),)*
                _ => None,
            }
        }
    };
}

bundled!("ar", "de", "en", "es", "fr", "it", "ja", "ko", "pt", "ru", "vi", "zh");

/// Load every bundled profile.
pub fn bundled_profiles() -> Vec<LanguageProfile> {
    BUNDLED_LANGUAGES
        .iter()
        .map(|lang| {
            let json = bundled_profile_json(lang).expect("listed language has a profile");
            LanguageProfile::from_json(*lang, json).expect("bundled profile is valid JSON")
        })
        .collect()
}
