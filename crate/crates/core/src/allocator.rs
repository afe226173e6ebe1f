//! Pre-allocation of corpus files to training workers: a global file index,
//! static upsampling / dynamic downsampling, and a deterministic partition.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{SourceClass, Taxonomy};
use crate::hash::hash_u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub index: u64,
    pub path: String,
    pub source: String,
    pub klass: SourceClass,
    pub size_bytes: u64,
}

/// One appearance of a file in the (possibly reweighted) table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Occurrence {
    pub index: u64,
    /// 0 for the first copy, 1 for the second, ...
    pub ordinal: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub static_factor: u32,
    pub dynamic_rate: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            static_factor: 2,
            dynamic_rate: 0.5,
        }
    }
}

impl Weights {
    pub const IDENTITY: Weights = Weights {
        static_factor: 1,
        dynamic_rate: 1.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileIndexTable {
    /// One entry per file, sorted by index.
    pub entries: Vec<FileEntry>,
    /// Sorted by (index, ordinal).
    pub occurrences: Vec<Occurrence>,
    pub seed: u64,
    pub weights: Weights,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AllocError {
    #[error("duplicate path {0:?}")]
    DuplicatePath(String),
    #[error("source {tag:?} of {path:?} is not in the taxonomy")]
    UnknownSource { path: String, tag: String },
    #[error("static_factor must be >= 1, got {0}")]
    StaticFactor(u32),
    #[error("dynamic_rate must be in (0, 1], got {0}")]
    DynamicRate(f64),
    #[error("num_workers must be >= 1")]
    NoWorkers,
}

/// Index files in sorted-path order so the table does not depend on the
/// order they were listed in.
pub fn build_index_table<P: AsRef<str>, S: AsRef<str>>(
    files: &[(P, S, u64)],
    taxonomy: &Taxonomy,
    seed: u64,
) -> Result<FileIndexTable, AllocError> {
    let mut sorted: Vec<(&str, &str, u64)> = files.iter().map(|(p, s, n)| (p.as_ref(), s.as_ref(), *n)).collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    let mut seen = HashSet::new();
    let mut entries = Vec::with_capacity(sorted.len());
    for (index, (path, source, size)) in sorted.into_iter().enumerate() {
        if !seen.insert(path) {
            return Err(AllocError::DuplicatePath(path.to_string()));
        }
        let klass = taxonomy.class_of(source).ok_or_else(|| AllocError::UnknownSource {
            path: path.to_string(),
            tag: source.to_string(),
        })?;
        entries.push(FileEntry {
            index: index as u64,
            path: path.to_string(),
            source: source.to_string(),
            klass,
            size_bytes: size,
        });
    }
    let occurrences = entries
        .iter()
        .map(|e| Occurrence {
            index: e.index,
            ordinal: 0,
        })
        .collect();
    Ok(FileIndexTable {
        entries,
        occurrences,
        seed,
        weights: Weights::IDENTITY,
    })
}

/// Deterministic per-index coin: true with probability `rate`.
pub fn keep_dynamic(index: u64, rate: f64, seed: u64) -> bool {
    let threshold = (rate * 2f64.powi(64)) as u128;
    (hash_u64(index, seed) as u128) < threshold
}

/// Repeat each static occurrence `static_factor` times and keep each dynamic
/// one with probability `dynamic_rate`, decided by a seeded hash of its index.
pub fn reweight(
    table: &FileIndexTable,
    static_factor: u32,
    dynamic_rate: f64,
    seed: u64,
) -> Result<FileIndexTable, AllocError> {
    if static_factor < 1 {
        return Err(AllocError::StaticFactor(static_factor));
    }
    if !(dynamic_rate > 0.0 && dynamic_rate <= 1.0) {
        return Err(AllocError::DynamicRate(dynamic_rate));
    }
    let klass: BTreeMap<u64, SourceClass> = table.entries.iter().map(|e| (e.index, e.klass)).collect();
    let mut occurrences = Vec::new();
    let mut copies: BTreeMap<u64, u32> = BTreeMap::new();
    for occ in &table.occurrences {
        let n = match klass[&occ.index] {
            SourceClass::Static => static_factor,
            SourceClass::Dynamic => keep_dynamic(occ.index, dynamic_rate, seed) as u32,
        };
        for _ in 0..n {
            let ordinal = copies.entry(occ.index).or_insert(0);
            occurrences.push(Occurrence {
                index: occ.index,
                ordinal: *ordinal,
            });
            *ordinal += 1;
        }
    }
    occurrences.sort();
    Ok(FileIndexTable {
        entries: table.entries.clone(),
        occurrences,
        seed,
        weights: Weights {
            static_factor: table.weights.static_factor * static_factor,
            dynamic_rate: table.weights.dynamic_rate * dynamic_rate,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum AssignMode {
    /// Occurrence `i` goes to worker `i mod n`.
    #[default]
    RoundRobin,
    /// Largest file first onto the worker with the fewest bytes. Balances
    /// bytes, not counts.
    SizeBalanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub per_worker: BTreeMap<u32, Vec<Occurrence>>,
}

pub fn assign(table: &FileIndexTable, num_workers: u32) -> Result<Assignment, AllocError> {
    assign_with(table, num_workers, AssignMode::RoundRobin)
}

pub fn assign_with(table: &FileIndexTable, num_workers: u32, mode: AssignMode) -> Result<Assignment, AllocError> {
    if num_workers < 1 {
        return Err(AllocError::NoWorkers);
    }
    let mut per_worker: BTreeMap<u32, Vec<Occurrence>> = (0..num_workers).map(|w| (w, Vec::new())).collect();
    match mode {
        AssignMode::RoundRobin => {
            for (i, occ) in table.occurrences.iter().enumerate() {
                per_worker
                    .get_mut(&((i as u64 % num_workers as u64) as u32))
                    .unwrap()
                    .push(*occ);
            }
        }
        AssignMode::SizeBalanced => {
            let size: BTreeMap<u64, u64> = table.entries.iter().map(|e| (e.index, e.size_bytes)).collect();
            let mut order: Vec<(usize, Occurrence)> = table.occurrences.iter().copied().enumerate().collect();
            order.sort_by_key(|(pos, o)| (std::cmp::Reverse(size[&o.index]), *pos));
            let mut load = vec![0u64; num_workers as usize];
            let mut placed: Vec<Vec<(usize, Occurrence)>> = vec![Vec::new(); num_workers as usize];
            for (pos, occ) in order {
                let w = (0..load.len()).min_by_key(|&w| (load[w], w)).unwrap();
                load[w] += size[&occ.index];
                placed[w].push((pos, occ));
            }
            for (w, mut list) in placed.into_iter().enumerate() {
                list.sort_by_key(|(pos, _)| *pos);
                per_worker.insert(w as u32, list.into_iter().map(|(_, o)| o).collect());
            }
        }
    }
    Ok(Assignment { per_worker })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerFiles {
    pub worker_id: u32,
    pub files: Vec<String>,
}

/// The file handed to training loaders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentManifest {
    pub seed: u64,
    pub weights: Weights,
    pub workers: Vec<WorkerFiles>,
}

impl AssignmentManifest {
    pub fn new(table: &FileIndexTable, assignment: &Assignment) -> Self {
        let path: BTreeMap<u64, &str> = table.entries.iter().map(|e| (e.index, e.path.as_str())).collect();
        Self {
            seed: table.seed,
            weights: table.weights,
            workers: assignment
                .per_worker
                .iter()
                .map(|(&worker_id, occs)| WorkerFiles {
                    worker_id,
                    files: occs.iter().map(|o| path[&o.index].to_string()).collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
