//! Paragraph vectors, cosine similarity and MinHash-LSH candidate search.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::hash::{hash_str, hash_u64};

/// Number of feature buckets for character 3-grams.
pub const FEATURE_BUCKETS: u32 = 1 << 20;
const GRAM_SEED: u64 = 0x9a7a_3f11;

/// Slack for floating-point rounding when comparing against a threshold, so
/// identical paragraphs pass at threshold 1.0.
pub const COSINE_EPSILON: f64 = 1e-9;

/// Paragraph ids in `pairs` are ordered so that the first is smaller.
pub type IdPair = (String, String);

/// Hashed character 3-gram term frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphVector {
    dims: Vec<(u32, f64)>,
    norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("cosine similarity of a zero-norm vector")]
pub struct ZeroNorm;

/// Bucket ids of the character 3-grams of `text`, one per occurrence. Text
/// shorter than three characters is a single feature.
pub fn gram_features(text: &str) -> Vec<u32> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let bucket = |s: &str| (hash_str(s, GRAM_SEED) % FEATURE_BUCKETS as u64) as u32;
    match chars.len() {
        0 => Vec::new(),
        1 | 2 => vec![bucket(text)],
        n => (0..n - 2)
            .map(|i| {
                let end = chars.get(i + 3).map_or(text.len(), |c| c.0);
                bucket(&text[chars[i].0..end])
            })
            .collect(),
    }
}

impl ParagraphVector {
    pub fn from_text(text: &str) -> Self {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for f in gram_features(text) {
            *counts.entry(f).or_default() += 1.0;
        }
        Self::from_counts(counts)
    }

    /// Build from explicit feature weights. Zero and negative weights are
    /// discarded.
    pub fn from_counts(counts: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut merged: BTreeMap<u32, f64> = BTreeMap::new();
        for (k, v) in counts {
            *merged.entry(k).or_default() += v;
        }
        let dims: Vec<(u32, f64)> = merged.into_iter().filter(|(_, v)| *v > 0.0).collect();
        let norm = dims.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        Self { dims, norm }
    }

    pub fn dims(&self) -> &[(u32, f64)] {
        &self.dims
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    fn dot(&self, other: &Self) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.dims.len() && j < other.dims.len() {
            let (a, b) = (self.dims[i], other.dims[j]);
            match a.0.cmp(&b.0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += a.1 * b.1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

pub fn cosine_similarity(a: &ParagraphVector, b: &ParagraphVector) -> Result<f64, ZeroNorm> {
    if a.norm == 0.0 || b.norm == 0.0 {
        return Err(ZeroNorm);
    }
    Ok((a.dot(b) / (a.norm * b.norm)).clamp(0.0, 1.0))
}

/// MinHash signature and banding parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct MinHashParams {
    pub num_hashes: usize,
    pub bands: usize,
    pub seed: u64,
}

impl Default for MinHashParams {
    fn default() -> Self {
        Self {
            num_hashes: 128,
            bands: 16,
            seed: 0x6d69_6e68,
        }
    }
}

impl MinHashParams {
    pub fn rows(&self) -> usize {
        self.num_hashes / self.bands
    }

    pub fn is_valid(&self) -> bool {
        self.bands > 0 && self.num_hashes > 0 && self.num_hashes.is_multiple_of(self.bands)
    }
}

/// A family of `num_hashes` random affine maps over 64-bit words.
#[derive(Debug, Clone)]
pub struct MinHasher {
    params: MinHashParams,
    coeffs: Vec<(u64, u64)>,
}

impl MinHasher {
    pub fn new(params: MinHashParams) -> Self {
        assert!(params.is_valid(), "num_hashes must be a positive multiple of bands");
        let coeffs = (0..params.num_hashes as u64)
            .map(|i| {
                let a = hash_u64(2 * i, params.seed) | 1;
                let b = hash_u64(2 * i + 1, params.seed);
                (a, b)
            })
            .collect();
        Self { params, coeffs }
    }

    pub fn params(&self) -> MinHashParams {
        self.params
    }

    /// Minimum of each hash over the distinct shingles.
    pub fn signature(&self, shingles: &[u32]) -> Vec<u64> {
        let mut sig = vec![u64::MAX; self.coeffs.len()];
        let mut distinct = shingles.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        for s in distinct {
            let x = hash_u64(s as u64, self.params.seed);
            for (slot, &(a, b)) in sig.iter_mut().zip(&self.coeffs) {
                let h = a.wrapping_mul(x).wrapping_add(b);
                if h < *slot {
                    *slot = h;
                }
            }
        }
        sig
    }

    /// One key per band; two signatures collide in a band when all its rows agree.
    pub fn band_keys(&self, signature: &[u64]) -> Vec<u64> {
        signature
            .chunks(self.params.rows())
            .enumerate()
            .map(|(band, rows)| {
                let mut bytes = Vec::with_capacity(rows.len() * 8);
                for r in rows {
                    bytes.extend_from_slice(&r.to_le_bytes());
                }
                crate::hash::hash_bytes(&bytes, band as u64)
            })
            .collect()
    }

    /// Band keys straight from text.
    pub fn text_band_keys(&self, text: &str) -> Vec<u64> {
        self.band_keys(&self.signature(&gram_features(text)))
    }
}

/// Index pairs `(i, j)`, `i < j`, sharing at least one band key.
pub fn lsh_candidates(band_keys: &[Vec<u64>]) -> Vec<(usize, usize)> {
    let mut buckets: HashMap<(usize, u64), Vec<usize>> = HashMap::new();
    for (i, keys) in band_keys.iter().enumerate() {
        for (band, &k) in keys.iter().enumerate() {
            buckets.entry((band, k)).or_default().push(i);
        }
    }
    let mut pairs = Vec::new();
    for members in buckets.values() {
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Near-duplicate paragraph pairs with cosine ≥ `threshold`, default MinHash
/// parameters.
pub fn paragraph_duplicates(paragraphs: &[(String, String)], threshold: f64) -> Vec<IdPair> {
    paragraph_duplicates_with(paragraphs, threshold, MinHashParams::default())
}

pub fn paragraph_duplicates_with(
    paragraphs: &[(String, String)],
    threshold: f64,
    params: MinHashParams,
) -> Vec<IdPair> {
    use rayon::prelude::*;
    let hasher = MinHasher::new(params);
    let prepared: Vec<(ParagraphVector, Vec<u64>)> = paragraphs
        .par_iter()
        .map(|(_, text)| {
            let features = gram_features(text);
            let keys = hasher.band_keys(&hasher.signature(&features));
            (
                ParagraphVector::from_counts(features.into_iter().map(|f| (f, 1.0))),
                keys,
            )
        })
        .collect();
    let keys: Vec<Vec<u64>> = prepared.iter().map(|(_, k)| k.clone()).collect();
    let mut out: Vec<IdPair> = lsh_candidates(&keys)
        .into_iter()
        .filter(|&(i, j)| {
            cosine_similarity(&prepared[i].0, &prepared[j].0).is_ok_and(|c| c + COSINE_EPSILON >= threshold)
        })
        .map(|(i, j)| ordered(&paragraphs[i].0, &paragraphs[j].0))
        .collect();
    out.sort();
    out.dedup();
    out
}

fn ordered(a: &str, b: &str) -> IdPair {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}
