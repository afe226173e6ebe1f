//! Multi-level deduplication: exact URL, simHash near-duplicates, paragraph
//! cosine similarity and corpus-wide sentence boilerplate.
//!
//! The stage reads its input several times instead of holding it: the first
//! scan collects signatures, a second scan (only when needed) builds vectors
//! for paragraph candidates, and the last scan rewrites and emits documents.

pub mod paragraph;
pub mod sentence;
pub mod simhash;
pub mod url;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, StageStats};
use crate::hash::hash_str;
pub use paragraph::{
    cosine_similarity, paragraph_duplicates, paragraph_duplicates_with, MinHashParams, MinHasher, ParagraphVector,
    ZeroNorm,
};
pub use sentence::{sentence_fingerprint, strip_boilerplate_sentences, SentenceFingerprint};
pub use simhash::{
    find_near_duplicates, hamming_distance, near_duplicate_pairs, simhash, DedupCluster, NearDupError, SearchMode,
    SimHashSignature,
};
pub use url::{canonicalize_url, UrlError};

use simhash::{clusters_from, UnionFind};

const BATCH: usize = 1024;

/// A re-readable stream of documents. Every scan must yield the same
/// documents in the same order.
pub trait DocSource: Sync {
    fn scan(&self) -> io::Result<Box<dyn Iterator<Item = io::Result<Document>> + '_>>;
}

impl DocSource for [Document] {
    fn scan(&self) -> io::Result<Box<dyn Iterator<Item = io::Result<Document>> + '_>> {
        Ok(Box::new(self.iter().cloned().map(Ok)))
    }
}

impl DocSource for Vec<Document> {
    fn scan(&self) -> io::Result<Box<dyn Iterator<Item = io::Result<Document>> + '_>> {
        self.as_slice().scan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum DedupLevel {
    Url,
    Simhash,
    Paragraph,
    Sentence,
}

impl DedupLevel {
    pub const ALL: [DedupLevel; 4] = [Self::Url, Self::Simhash, Self::Paragraph, Self::Sentence];

    pub fn drop_reason(self) -> &'static str {
        match self {
            Self::Url => "url_duplicate",
            Self::Simhash => "simhash_duplicate",
            Self::Paragraph => "paragraph_duplicate",
            Self::Sentence => sentence::BOILERPLATE_ONLY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct DedupConfig {
    /// Levels to run; they always execute coarse to fine.
    pub levels: Vec<DedupLevel>,
    pub simhash_k: u32,
    pub search: SearchMode,
    pub paragraph_threshold: f64,
    /// Paragraphs shorter than this many characters are never compared.
    pub paragraph_min_chars: usize,
    pub minhash: MinHashParams,
    pub sentence_k: usize,
    pub min_repeat: usize,
}

impl Default for DedupConfig {
    fn default() -> Self {
        Self {
            levels: DedupLevel::ALL.to_vec(),
            simhash_k: 3,
            search: SearchMode::Banded,
            paragraph_threshold: 0.95,
            paragraph_min_chars: 32,
            minhash: MinHashParams::default(),
            sentence_k: sentence::DEFAULT_PREFIX_LEN,
            min_repeat: sentence::DEFAULT_MIN_REPEAT,
        }
    }
}

impl DedupConfig {
    pub fn with_levels(levels: &[DedupLevel]) -> Self {
        Self {
            levels: levels.to_vec(),
            ..Self::default()
        }
    }

    pub fn has(&self, level: DedupLevel) -> bool {
        self.levels.contains(&level)
    }

    pub fn validate(&self) -> Result<(), DedupError> {
        let bad = |m: &str| Err(DedupError::Config(m.to_string()));
        if self.search == SearchMode::Banded && self.simhash_k > simhash::MAX_BANDED_K {
            return bad("simhash_k above 3 requires search = \"exact\"");
        }
        if !(self.paragraph_threshold > 0.0 && self.paragraph_threshold <= 1.0) {
            return bad("paragraph_threshold must be in (0, 1]");
        }
        if !self.minhash.is_valid() {
            return bad("minhash.num_hashes must be a positive multiple of minhash.bands");
        }
        if self.sentence_k == 0 {
            return bad("sentence_k must be at least 1");
        }
        if self.min_repeat < 2 {
            return bad("min_repeat must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DedupError {
    #[error("invalid dedup config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("duplicate document id {0:?} in dedup input")]
    DuplicateId(String),
    #[error("input changed between dedup passes")]
    SourceChanged,
}

/// One line of the dedup manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupRecord {
    pub cluster_representative: String,
    pub dropped_ids: Vec<String>,
    pub level: DedupLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DedupReport {
    pub stats: StageStats,
    pub manifest: Vec<DedupRecord>,
    pub sentences_removed: usize,
}

impl DedupReport {
    pub fn manifest_jsonl(&self) -> String {
        self.manifest
            .iter()
            .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
            .collect()
    }
}

#[derive(Debug)]
struct ParaSig {
    index: usize,
    band_keys: Option<Vec<u64>>,
    sentence_keys: Vec<u64>,
}

#[derive(Debug)]
struct DocSig {
    id: String,
    url: Option<u64>,
    simhash: SimHashSignature,
    paragraphs: Vec<ParaSig>,
}

fn paragraphs(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.split("\n\n").enumerate().map(|(i, p)| (i, p.trim()))
}

fn signature(doc: &Document, cfg: &DedupConfig, hasher: &MinHasher) -> DocSig {
    let url = if cfg.has(DedupLevel::Url) {
        doc.url
            .as_deref()
            .and_then(|u| canonicalize_url(u).ok())
            .map(|u| hash_str(&u, 0))
    } else {
        None
    };
    let want_para = cfg.has(DedupLevel::Paragraph);
    let want_sent = cfg.has(DedupLevel::Sentence);
    let paragraphs = if want_para || want_sent {
        paragraphs(&doc.content)
            .filter(|(_, p)| !p.is_empty())
            .map(|(index, p)| ParaSig {
                index,
                band_keys: (want_para && p.chars().count() >= cfg.paragraph_min_chars)
                    .then(|| hasher.text_band_keys(p)),
                sentence_keys: if want_sent {
                    sentence::fingerprint_keys(p, cfg.sentence_k)
                } else {
                    Vec::new()
                },
            })
            .collect()
    } else {
        Vec::new()
    };
    DocSig {
        id: doc.id.clone(),
        url,
        simhash: simhash(&doc.content),
        paragraphs,
    }
}

/// Read the source in batches, mapping each document in parallel while
/// keeping scan order.
fn scan_map<T: Send>(
    source: &(impl DocSource + ?Sized),
    f: impl Fn(usize, Document) -> T + Sync,
) -> Result<Vec<T>, DedupError> {
    let mut out = Vec::new();
    let mut batch = Vec::with_capacity(BATCH);
    let flush = |batch: &mut Vec<(usize, Document)>, out: &mut Vec<T>| {
        out.par_extend(batch.par_drain(..).map(|(i, d)| f(i, d)));
    };
    for (i, doc) in source.scan()?.enumerate() {
        batch.push((i, doc?));
        if batch.len() == BATCH {
            flush(&mut batch, &mut out);
        }
    }
    flush(&mut batch, &mut out);
    Ok(out)
}

/// Run the enabled levels over `source`, handing survivors to `sink` in
/// input order.
pub fn dedup_stage(
    source: &(impl DocSource + ?Sized),
    cfg: &DedupConfig,
    sink: &mut dyn FnMut(Document) -> io::Result<()>,
) -> Result<DedupReport, DedupError> {
    cfg.validate()?;
    let hasher = MinHasher::new(cfg.minhash);
    let sigs = scan_map(source, |_, d| signature(&d, cfg, &hasher))?;
    let n = sigs.len();
    {
        let mut ids = HashSet::with_capacity(n);
        for s in &sigs {
            if !ids.insert(s.id.as_str()) {
                return Err(DedupError::DuplicateId(s.id.clone()));
            }
        }
    }

    let mut dropped_by: Vec<Option<DedupLevel>> = vec![None; n];
    let mut manifest = Vec::new();

    if cfg.has(DedupLevel::Url) {
        let mut groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, s) in sigs.iter().enumerate() {
            if let Some(u) = s.url {
                groups.entry(u).or_default().push(i);
            }
        }
        let mut uf = UnionFind::new(n);
        for members in groups.values() {
            for w in members.windows(2) {
                uf.union(w[0], w[1]);
            }
        }
        apply_clusters(
            &mut uf,
            &sigs,
            (0..n).collect(),
            DedupLevel::Url,
            &mut dropped_by,
            &mut manifest,
        );
    }

    if cfg.has(DedupLevel::Simhash) {
        let alive: Vec<usize> = (0..n).filter(|&i| dropped_by[i].is_none()).collect();
        let bits: Vec<SimHashSignature> = alive.iter().map(|&i| sigs[i].simhash).collect();
        let mut uf = UnionFind::new(alive.len());
        for (a, b) in
            near_duplicate_pairs(&bits, cfg.simhash_k, cfg.search).map_err(|e| DedupError::Config(e.to_string()))?
        {
            uf.union(a, b);
        }
        apply_clusters(
            &mut uf,
            &sigs,
            alive,
            DedupLevel::Simhash,
            &mut dropped_by,
            &mut manifest,
        );
    }

    // Paragraph entries of surviving documents: (doc, paragraph index).
    let mut removed_paras: HashSet<(usize, usize)> = HashSet::new();
    if cfg.has(DedupLevel::Paragraph) {
        let entries: Vec<(usize, usize, &Vec<u64>)> = (0..n)
            .filter(|&i| dropped_by[i].is_none())
            .flat_map(|i| {
                sigs[i]
                    .paragraphs
                    .iter()
                    .filter_map(move |p| p.band_keys.as_ref().map(|k| (i, p.index, k)))
            })
            .collect();
        let keys: Vec<Vec<u64>> = entries.iter().map(|e| e.2.clone()).collect();
        let candidates = paragraph::lsh_candidates(&keys);
        if !candidates.is_empty() {
            let mut needed: HashMap<usize, Vec<usize>> = HashMap::new();
            for &(a, b) in &candidates {
                for e in [a, b] {
                    needed.entry(entries[e].0).or_default().push(entries[e].1);
                }
            }
            let vectors: HashMap<(usize, usize), ParagraphVector> = scan_map(source, |doc_idx, d| {
                let Some(want) = needed.get(&doc_idx) else {
                    return Vec::new();
                };
                paragraphs(&d.content)
                    .filter(|(i, _)| want.contains(i))
                    .map(|(i, p)| ((doc_idx, i), ParagraphVector::from_text(p)))
                    .collect::<Vec<_>>()
            })?
            .into_iter()
            .flatten()
            .collect();
            let mut uf = UnionFind::new(entries.len());
            for (a, b) in candidates {
                let key = |e: usize| (entries[e].0, entries[e].1);
                let (Some(va), Some(vb)) = (vectors.get(&key(a)), vectors.get(&key(b))) else {
                    return Err(DedupError::SourceChanged);
                };
                if cosine_similarity(va, vb).is_ok_and(|c| c + paragraph::COSINE_EPSILON >= cfg.paragraph_threshold) {
                    uf.union(a, b);
                }
            }
            for group in uf.groups().into_iter().filter(|g| g.len() > 1) {
                let mut members: Vec<(&str, usize, usize)> = group
                    .iter()
                    .map(|&e| (sigs[entries[e].0].id.as_str(), entries[e].1, entries[e].0))
                    .collect();
                members.sort();
                let (rep_id, rep_para, _) = members[0];
                for &(_, para, doc) in &members[1..] {
                    removed_paras.insert((doc, para));
                }
                manifest.push(DedupRecord {
                    cluster_representative: format!("{rep_id}#{rep_para}"),
                    dropped_ids: members[1..].iter().map(|(id, p, _)| format!("{id}#{p}")).collect(),
                    level: DedupLevel::Paragraph,
                });
            }
        }
    }

    let mut boilerplate: HashSet<u64> = HashSet::new();
    if cfg.has(DedupLevel::Sentence) {
        let mut counts: HashMap<u64, usize> = HashMap::new();
        for (i, s) in sigs.iter().enumerate().filter(|(i, _)| dropped_by[*i].is_none()) {
            let mut keys: Vec<u64> = s
                .paragraphs
                .iter()
                .filter(|p| !removed_paras.contains(&(i, p.index)))
                .flat_map(|p| p.sentence_keys.iter().copied())
                .collect();
            keys.sort_unstable();
            keys.dedup();
            for k in keys {
                *counts.entry(k).or_default() += 1;
            }
        }
        boilerplate = counts
            .into_iter()
            .filter(|&(_, c)| c >= cfg.min_repeat)
            .map(|(k, _)| k)
            .collect();
    }

    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.sort_by(|&a, &b| {
        let (x, y) = (&manifest[a], &manifest[b]);
        (x.level, &x.cluster_representative).cmp(&(y.level, &y.cluster_representative))
    });
    let manifest: Vec<DedupRecord> = order.into_iter().map(|i| manifest[i].clone()).collect();

    enum Fate {
        Keep(Document, usize),
        Drop(&'static str, usize),
    }
    let fates = scan_map(source, |i, d| {
        let bytes = d.byte_len() as usize;
        if i >= n || sigs[i].id != d.id {
            return Err(DedupError::SourceChanged);
        }
        if let Some(level) = dropped_by[i] {
            return Ok((bytes, Fate::Drop(level.drop_reason(), 0)));
        }
        let mut doc = d;
        let mut para_removed = false;
        if removed_paras.iter().any(|&(di, _)| di == i) {
            let kept: Vec<&str> = doc
                .content
                .split("\n\n")
                .enumerate()
                .filter(|(p, _)| !removed_paras.contains(&(i, *p)))
                .map(|(_, p)| p)
                .collect();
            doc.content = kept.join("\n\n");
            para_removed = true;
        }
        let mut sentences = 0;
        if !boilerplate.is_empty() {
            let (text, removed) = sentence::remove_sentences(&doc.content, |s| {
                boilerplate.contains(&sentence_fingerprint(s, cfg.sentence_k).key())
            });
            if removed > 0 {
                doc.content = text;
                sentences = removed;
            }
        }
        if doc.content.trim().is_empty() {
            let reason = if sentences > 0 {
                DedupLevel::Sentence.drop_reason()
            } else if para_removed {
                DedupLevel::Paragraph.drop_reason()
            } else {
                "empty"
            };
            return Ok((bytes, Fate::Drop(reason, sentences)));
        }
        Ok((bytes, Fate::Keep(doc, sentences)))
    });
    let fates = fates?;
    if fates.len() != n {
        return Err(DedupError::SourceChanged);
    }

    let mut stats = StageStats::new("dedup");
    let mut sentences_removed = 0;
    for fate in fates {
        let (bytes, fate) = fate?;
        stats.record_in(bytes as u64);
        match fate {
            Fate::Keep(doc, s) => {
                sentences_removed += s;
                stats.record_out(doc.byte_len());
                sink(doc)?;
            }
            Fate::Drop(reason, s) => {
                sentences_removed += s;
                stats.record_drop(reason);
            }
        }
    }
    Ok(DedupReport {
        stats,
        manifest,
        sentences_removed,
    })
}

fn apply_clusters(
    uf: &mut UnionFind,
    sigs: &[DocSig],
    members: Vec<usize>,
    level: DedupLevel,
    dropped_by: &mut [Option<DedupLevel>],
    manifest: &mut Vec<DedupRecord>,
) {
    let index_of: HashMap<&str, usize> = members.iter().map(|&i| (sigs[i].id.as_str(), i)).collect();
    for cluster in clusters_from(uf, |local| sigs[members[local]].id.as_str()) {
        if cluster.members.len() < 2 {
            continue;
        }
        for id in cluster.dropped() {
            dropped_by[index_of[id.as_str()]] = Some(level);
        }
        manifest.push(DedupRecord {
            cluster_representative: cluster.representative.clone(),
            dropped_ids: cluster.dropped().cloned().collect(),
            level,
        });
    }
}

/// In-memory convenience wrapper around [`dedup_stage`].
pub fn dedup_documents(docs: &[Document], cfg: &DedupConfig) -> Result<(Vec<Document>, DedupReport), DedupError> {
    let mut out = Vec::new();
    let report = dedup_stage(docs, cfg, &mut |d| {
        out.push(d);
        Ok(())
    })?;
    Ok((out, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(seed: u64, n: usize) -> String {
        (0..n)
            .map(|i| format!("w{}", crate::hash::hash_u64(i as u64, seed) % 100_000))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn url_duplicates_keep_smallest_id() {
        let docs = vec![
            Document::new("b", "web", words(1, 50)).with_url("HTTP://Ex.com:80/a?b=1&a=2#x"),
            Document::new("a", "web", words(2, 50)).with_url("http://ex.com/a?a=2&b=1"),
            Document::new("c", "web", words(3, 50)).with_url("notaurl"),
        ];
        let (out, report) = dedup_documents(&docs, &DedupConfig::with_levels(&[DedupLevel::Url])).unwrap();
        let ids: Vec<&str> = out.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(
            report.manifest,
            vec![DedupRecord {
                cluster_representative: "a".into(),
                dropped_ids: vec!["b".into()],
                level: DedupLevel::Url
            }]
        );
        assert_eq!(report.stats.drop_reasons.get("url_duplicate"), Some(&1));
        assert!(report.stats.is_consistent());
    }

    #[test]
    fn identical_documents_leave_one_survivor() {
        let text = words(9, 80);
        let docs = vec![
            Document::new("x2", "web", text.clone()),
            Document::new("x1", "web", text),
        ];
        let mut cfg = DedupConfig::with_levels(&[DedupLevel::Simhash]);
        cfg.simhash_k = 3;
        let (out, report) = dedup_documents(&docs, &cfg).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].id, "x1");
        assert_eq!(report.stats.docs_out, 1);
    }

    #[test]
    fn paragraph_duplicates_are_removed_from_later_documents() {
        let shared = "Glaciers carve deep valleys as they advance slowly over many centuries of cold.";
        let docs = vec![
            Document::new("d1", "web", format!("{}\n\n{shared}", words(1, 40))),
            Document::new("d2", "web", format!("{}\n\n{shared}\n\n{}", words(2, 40), words(3, 40))),
            Document::new("d3", "web", shared.to_string()),
        ];
        let cfg = DedupConfig::with_levels(&[DedupLevel::Paragraph]);
        let (out, report) = dedup_documents(&docs, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert!(out[0].content.contains(shared));
        assert_eq!(out[1].content, format!("{}\n\n{}", words(2, 40), words(3, 40)));
        assert_eq!(report.stats.drop_reasons.get("paragraph_duplicate"), Some(&1));
        assert_eq!(report.manifest[0].cluster_representative, "d1#1");
        assert_eq!(
            report.manifest[0].dropped_ids,
            vec!["d2#1".to_string(), "d3#0".to_string()]
        );
    }

    #[test]
    fn boilerplate_only_documents_are_dropped() {
        let mut docs: Vec<Document> = (0..10)
            .map(|i| {
                Document::new(
                    format!("d{i}"),
                    "web",
                    format!("{} ends here.\nShare this page with friends.", words(i, 30)),
                )
            })
            .collect();
        docs.push(Document::new("z", "web", "Share this page with friends."));
        let (out, report) = dedup_documents(&docs, &DedupConfig::with_levels(&[DedupLevel::Sentence])).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.iter().all(|d| !d.content.contains("Share this page")));
        assert_eq!(report.sentences_removed, 11);
        assert_eq!(report.stats.drop_reasons.get("boilerplate_only"), Some(&1));
    }

    #[test]
    fn empty_input_and_bad_config() {
        let (out, report) = dedup_documents(&[], &DedupConfig::default()).unwrap();
        assert!(out.is_empty());
        assert_eq!(report.stats.docs_in, 0);
        let mut cfg = DedupConfig {
            simhash_k: 5,
            ..DedupConfig::default()
        };
        assert!(matches!(dedup_documents(&[], &cfg), Err(DedupError::Config(_))));
        cfg.search = SearchMode::Exact;
        assert!(dedup_documents(&[], &cfg).is_ok());
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let docs = vec![Document::new("a", "web", "one"), Document::new("a", "web", "two")];
        assert!(matches!(
            dedup_documents(&docs, &DedupConfig::default()),
            Err(DedupError::DuplicateId(_))
        ));
    }

    #[test]
    fn independent_of_thread_count() {
        let docs: Vec<Document> = (0..300)
            .map(|i| {
                let body = if i % 10 == 0 { words(10_000, 60) } else { words(i, 60) };
                Document::new(
                    format!("d{i:03}"),
                    "web",
                    format!("{body}\n\nCommon footer line for all pages here."),
                )
            })
            .collect();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| dedup_documents(&docs, &DedupConfig::default()).unwrap())
        };
        let (a, ra) = run(1);
        let (b, rb) = run(8);
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(a.len(), 300 - 29);
    }
}
