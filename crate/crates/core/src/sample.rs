//! A deterministic multilingual text sample for tokenizer training and
//! evaluation, built from the bundled seed sentences.
//!
//! Every fifth seed sentence per language is held out and never appears in
//! the training sample.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::normalize::langid::{bundled_seed, BUNDLED_LANGUAGES};

const HOLD_OUT_EVERY: usize = 5;

fn seed_lines(lang: &str) -> impl Iterator<Item = (usize, &'static str)> {
    bundled_seed(lang)
        .unwrap_or("")
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
}

fn unspaced(lang: &str) -> bool {
    matches!(lang, "zh" | "ja")
}

/// Seed sentences available for training, per language.
pub fn training_sentences(lang: &str) -> Vec<&'static str> {
    seed_lines(lang)
        .filter(|(i, _)| i % HOLD_OUT_EVERY != HOLD_OUT_EVERY - 1)
        .map(|(_, l)| l)
        .collect()
}

/// `(lang, sentence)` pairs never used for training.
pub fn held_out_sentences() -> Vec<(String, String)> {
    BUNDLED_LANGUAGES
        .iter()
        .flat_map(|lang| {
            seed_lines(lang)
                .filter(|(i, _)| i % HOLD_OUT_EVERY == HOLD_OUT_EVERY - 1)
                .map(move |(_, l)| (lang.to_string(), l.to_string()))
        })
        .collect()
}

/// Documents of 3 to 8 training sentences in one language, some carrying
/// numbers, until at least `target_bytes` of text exist.
pub fn multilingual_sample(target_bytes: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pools: Vec<(&str, Vec<&str>)> = BUNDLED_LANGUAGES.iter().map(|l| (*l, training_sentences(l))).collect();
    let mut docs = Vec::new();
    let mut total = 0;
    while total < target_bytes {
        let (lang, pool) = &pools[rng.gen_range(0..pools.len())];
        let n = rng.gen_range(3..=8);
        let mut parts: Vec<String> = (0..n).map(|_| pool.choose(&mut rng).unwrap().to_string()).collect();
        if rng.gen_bool(0.3) {
            let number = rng.gen_range(0..100_000u32).to_string();
            let number = if unspaced(lang) && rng.gen_bool(0.5) {
                number
                    .chars()
                    .map(|c| char::from_u32(c as u32 - '0' as u32 + '０' as u32).unwrap())
                    .collect()
            } else {
                number
            };
            parts.push(number);
        }
        let doc = parts.join(if unspaced(lang) { "" } else { " " });
        total += doc.len();
        docs.push(doc);
    }
    docs
}
