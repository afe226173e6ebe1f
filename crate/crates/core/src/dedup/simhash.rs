//! 64-bit simHash signatures and near-duplicate clustering.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::hash::hash_str;
use crate::text::word_tokens;

/// Seed for the per-feature hash.
const FEATURE_SEED: u64 = 0x5eed_51a4;

/// Largest Hamming distance the 4-band index finds exhaustively.
pub const MAX_BANDED_K: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SimHashSignature {
    pub bits: u64,
}

/// Word features weighted by frequency, one signed vote per bit.
pub fn simhash(text: &str) -> SimHashSignature {
    let mut freq: HashMap<&str, i64> = HashMap::new();
    for w in word_tokens(text) {
        *freq.entry(w).or_default() += 1;
    }
    let mut votes = [0i64; 64];
    for (word, weight) in freq {
        let h = hash_str(word, FEATURE_SEED);
        for (bit, vote) in votes.iter_mut().enumerate() {
            if h >> bit & 1 == 1 {
                *vote += weight;
            } else {
                *vote -= weight;
            }
        }
    }
    let bits = votes
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 0)
        .fold(0u64, |acc, (bit, _)| acc | 1 << bit);
    SimHashSignature { bits }
}

#[inline]
pub fn hamming_distance(a: SimHashSignature, b: SimHashSignature) -> u32 {
    (a.bits ^ b.bits).count_ones()
}

/// A group of documents judged to be copies of each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupCluster {
    pub representative: String,
    pub members: Vec<String>,
}

impl DedupCluster {
    pub fn dropped(&self) -> impl Iterator<Item = &String> {
        self.members.iter().filter(move |m| **m != self.representative)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Four 16-bit bands; exhaustive for k ≤ 3.
    #[default]
    Banded,
    /// All pairs.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NearDupError {
    #[error("banded search only supports k <= {MAX_BANDED_K}, got {0}; use exact mode")]
    KTooLarge(u32),
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub(crate) struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub(crate) fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub(crate) fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }

    /// Groups of indices, each sorted, in order of their first member.
    pub(crate) fn groups(&mut self) -> Vec<Vec<usize>> {
        let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..self.parent.len() {
            let r = self.find(i);
            by_root.entry(r).or_default().push(i);
        }
        let mut groups: Vec<Vec<usize>> = by_root.into_values().collect();
        groups.sort_by_key(|g| g[0]);
        groups
    }
}

/// Index pairs `(i, j)`, `i < j`, within distance `k`.
pub fn near_duplicate_pairs(
    sigs: &[SimHashSignature],
    k: u32,
    mode: SearchMode,
) -> Result<Vec<(usize, usize)>, NearDupError> {
    let mut pairs = Vec::new();
    match mode {
        SearchMode::Exact => {
            for i in 0..sigs.len() {
                for j in i + 1..sigs.len() {
                    if hamming_distance(sigs[i], sigs[j]) <= k {
                        pairs.push((i, j));
                    }
                }
            }
        }
        SearchMode::Banded => {
            if k > MAX_BANDED_K {
                return Err(NearDupError::KTooLarge(k));
            }
            let mut buckets: HashMap<(u8, u16), Vec<usize>> = HashMap::new();
            for (i, s) in sigs.iter().enumerate() {
                for band in 0..4u8 {
                    let slice = (s.bits >> (16 * band as u32)) as u16;
                    buckets.entry((band, slice)).or_default().push(i);
                }
            }
            for members in buckets.values() {
                for (a, &i) in members.iter().enumerate() {
                    for &j in &members[a + 1..] {
                        if hamming_distance(sigs[i], sigs[j]) <= k {
                            pairs.push((i, j));
                        }
                    }
                }
            }
            pairs.sort_unstable();
            pairs.dedup();
        }
    }
    Ok(pairs)
}

/// Cluster documents whose signatures are within `k` bits. Every input id
/// appears in exactly one cluster; singletons included. Output is sorted by
/// representative, which is the smallest member id.
pub fn find_near_duplicates(
    sigs: &[(String, SimHashSignature)],
    k: u32,
    mode: SearchMode,
) -> Result<Vec<DedupCluster>, NearDupError> {
    let mut seen = std::collections::HashSet::new();
    for (id, _) in sigs {
        if !seen.insert(id.as_str()) {
            return Err(NearDupError::DuplicateId(id.clone()));
        }
    }
    let bits: Vec<SimHashSignature> = sigs.iter().map(|(_, s)| *s).collect();
    let mut uf = UnionFind::new(sigs.len());
    for (i, j) in near_duplicate_pairs(&bits, k, mode)? {
        uf.union(i, j);
    }
    Ok(clusters_from(&mut uf, |i| sigs[i].0.as_str()))
}

pub(crate) fn clusters_from<'a>(uf: &mut UnionFind, id: impl Fn(usize) -> &'a str) -> Vec<DedupCluster> {
    let mut clusters: Vec<DedupCluster> = uf
        .groups()
        .into_iter()
        .map(|g| {
            let mut members: Vec<String> = g.into_iter().map(|i| id(i).to_string()).collect();
            members.sort();
            DedupCluster {
                representative: members[0].clone(),
                members,
            }
        })
        .collect();
    clusters.sort_by(|a, b| a.representative.cmp(&b.representative));
    clusters
}
