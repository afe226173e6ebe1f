//! End-to-end runs: normalize → clean → dedup → toxicity over JSONL shards.
//!
//! Map stages stream batch by batch. Dedup needs several passes, so the
//! map output is spilled to a work file that is replayed, and only
//! fingerprints are held in memory.

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use rayon::prelude::*;
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::allocator::{AssignMode, Weights};
use crate::clean::{apply_rules, bundled_rules, load_rules, RuleError, RuleSet, Verdict as CleanVerdict};
use crate::corpus::{Document, StageStats, Taxonomy};
use crate::dedup::{dedup_stage, DedupConfig, DedupError, DocSource};
use crate::hash::{hash_str, hex64};
use crate::io::{expand_globs, open_reader};
use crate::normalize::{NormalizeError, Normalizer, NormalizerConfig, RawFormat, DEFAULT_REPAIR_BUDGET};
use crate::tokenizer::train::TrainParams;
use crate::toxicity::{
    filter_documents, LexiconError, LexiconMatcher, ModelError, ToxicityConfig, ToxicityModel, ToxicityScorer,
};

const BATCH: usize = 4096;
const WORK_DIR: &str = ".work";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEDUP_MANIFEST_FILE: &str = "dedup_manifest.jsonl";
/// Default share of input lines that may be malformed before a run aborts.
pub const DEFAULT_BAD_RECORD_FRACTION: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Normalize,
    Clean,
    Dedup,
    Toxicity,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Normalize, Stage::Clean, Stage::Dedup, Stage::Toxicity];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Normalize => "normalize",
            Stage::Clean => "clean",
            Stage::Dedup => "dedup",
            Stage::Toxicity => "toxicity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    /// One JSON record per line.
    #[default]
    Jsonl,
    /// Every line is the content of one document.
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct IoConfig {
    /// Glob patterns; matches are read in sorted path order.
    pub inputs: Vec<String>,
    pub output_dir: PathBuf,
    /// Documents per output shard.
    pub shard_size: usize,
    pub format: InputFormat,
    /// Source tag for records that carry none.
    pub default_source: String,
}

impl Default for IoConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            shard_size: 10_000,
            format: InputFormat::Jsonl,
            default_source: "web".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct NormalizeParams {
    /// Share of invalid UTF-8 bytes repaired with U+FFFD before a record is rejected.
    pub repair_budget: f64,
    pub detect_language: bool,
}

impl Default for NormalizeParams {
    fn default() -> Self {
        Self {
            repair_budget: DEFAULT_REPAIR_BUDGET,
            detect_language: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct CleanParams {
    /// Rule file; the bundled rules when absent.
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct ToxicityParams {
    /// Lexicon TSV (`term<TAB>category[<TAB>weight]`); the bundled one when absent.
    pub lexicon: Option<PathBuf>,
    /// Classifier model JSON; lexicon-only filtering when absent.
    pub model: Option<PathBuf>,
    /// Only count lexicon hits that sit on word boundaries (CJK terms always match).
    pub word_boundaries: bool,
    pub thresholds: ToxicityConfig,
}

impl Default for ToxicityParams {
    fn default() -> Self {
        Self {
            lexicon: None,
            model: None,
            word_boundaries: true,
            thresholds: ToxicityConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields, bound(deserialize = "P: Deserialize<'de> + Default"))]
#[schemars(bound = "P: JsonSchema + Default")]
pub struct StageSection<P> {
    pub enabled: bool,
    pub params: P,
}

impl<P: Default> Default for StageSection<P> {
    fn default() -> Self {
        Self {
            enabled: true,
            params: P::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct StagesConfig {
    pub normalize: StageSection<NormalizeParams>,
    pub clean: StageSection<CleanParams>,
    pub dedup: StageSection<DedupConfig>,
    pub toxicity: StageSection<ToxicityParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct AllocatorConfig {
    pub workers: u32,
    pub weights: Weights,
    pub mode: AssignMode,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self {
            workers: 8,
            weights: Weights::default(),
            mode: AssignMode::RoundRobin,
        }
    }
}

/// The single JSON document that drives a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct PipelineConfig {
    /// Mixed into the MinHash seed and used as the allocator seed.
    pub seed: u64,
    /// Worker threads; all cores when absent. Never changes the output.
    pub threads: Option<usize>,
    /// Abort once more malformed lines than this are seen. When absent the
    /// limit is 0.1% of the lines read.
    pub max_bad_records: Option<u64>,
    pub taxonomy: Taxonomy,
    pub io: IoConfig,
    pub stages: StagesConfig,
    pub tokenizer: TrainParams,
    pub allocator: AllocatorConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn schema_json() -> String {
        serde_json::to_string_pretty(&schemars::schema_for!(PipelineConfig)).expect("schema serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.io.shard_size == 0 {
            return bad("io.shard_size must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        if !self.taxonomy.contains(&self.io.default_source) {
            return bad(format!(
                "io.default_source `{}` is not in the taxonomy",
                self.io.default_source
            ));
        }
        let budget = self.stages.normalize.params.repair_budget;
        if !(0.0..=1.0).contains(&budget) {
            return bad("stages.normalize.params.repair_budget must be in [0, 1]".into());
        }
        self.stages
            .dedup
            .params
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.stages
            .toxicity
            .params
            .thresholds
            .validate()
            .map_err(PipelineError::Config)?;
        Ok(())
    }

    /// Enabled stages in pipeline order.
    pub fn enabled_stages(&self) -> Vec<Stage> {
        let s = &self.stages;
        let on = [
            s.normalize.enabled,
            s.clean.enabled,
            s.dedup.enabled,
            s.toxicity.enabled,
        ];
        Stage::ALL
            .into_iter()
            .zip(on)
            .filter(|(_, e)| *e)
            .map(|(st, _)| st)
            .collect()
    }

    /// Hash of everything that can influence the output. Thread count and
    /// output location are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.threads = None;
        c.io.output_dir = PathBuf::new();
        hex64(hash_str(&serde_json::to_string(&c).expect("config serializes"), 0))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{bad} malformed records exceed the limit of {allowed}")]
    TooManyBadRecords { bad: u64, allowed: u64 },
    #[error(transparent)]
    Rules(#[from] RuleError),
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
}

impl PipelineError {
    fn io(path: &Path, source: io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub stages: Vec<Stage>,
    pub per_stage: Vec<StageStats>,
    /// RFC 3339, UTC.
    pub started: String,
    pub finished: String,
    /// Shard file names relative to the output directory.
    pub shards: Vec<String>,
    pub bad_records: u64,
    pub dedup_manifest: Option<String>,
}

impl RunManifest {
    /// Copy with the timestamps blanked, for comparing runs.
    pub fn without_timestamps(&self) -> Self {
        Self {
            started: String::new(),
            finished: String::new(),
            ..self.clone()
        }
    }

    /// docs_out of each stage equals docs_in of the next.
    pub fn chain_is_consistent(&self) -> bool {
        self.per_stage.iter().all(StageStats::is_consistent)
            && self.per_stage.windows(2).all(|w| w[0].docs_out == w[1].docs_in)
    }
}

/// Run every enabled stage in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    run_stages(cfg, &cfg.enabled_stages())
}

/// Run `stages` (reordered into pipeline order) with the given config.
/// Without a normalize stage, inputs must already be documents in JSONL.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| PipelineError::Config(e.to_string()))?;
    pool.install(|| execute(cfg, &stages))
}

struct MapStages {
    normalizer: Option<Normalizer>,
    rules: Option<RuleSet>,
    format: RawFormat,
    default_source: String,
}

enum MapResult {
    Kept(Document),
    /// Dropped at `stage` with `reason`.
    Dropped(Stage, String),
    Malformed,
}

/// Per-document state carried through the map stages, for statistics.
struct MapTrace {
    in_bytes: u64,
    clean_in: Option<u64>,
    result: MapResult,
}

impl MapStages {
    fn run(&self, raw: &[u8], ordinal: u64) -> MapTrace {
        let in_bytes = raw.len() as u64;
        let doc = match &self.normalizer {
            Some(n) => match n.normalize_record(raw, &self.default_source, self.format, ordinal) {
                Ok(d) => d,
                Err(NormalizeError::Malformed(_)) => return trace(in_bytes, None, MapResult::Malformed),
                Err(e) => {
                    return trace(
                        in_bytes,
                        None,
                        MapResult::Dropped(Stage::Normalize, e.reason().to_string()),
                    )
                }
            },
            None => match std::str::from_utf8(raw)
                .ok()
                .and_then(|s| Document::from_json_line(s).ok())
            {
                Some(d) => d,
                None => return trace(in_bytes, None, MapResult::Malformed),
            },
        };
        let Some(rules) = &self.rules else {
            return trace(in_bytes, None, MapResult::Kept(doc));
        };
        let clean_in = Some(doc.byte_len());
        let out = apply_rules(&doc, rules);
        match (out.verdict, out.doc) {
            (CleanVerdict::Kept, Some(d)) => trace(in_bytes, clean_in, MapResult::Kept(d)),
            _ => {
                let reason = out.drop_reason.unwrap_or_else(|| "dropped".to_string());
                trace(in_bytes, clean_in, MapResult::Dropped(Stage::Clean, reason))
            }
        }
    }
}

fn trace(in_bytes: u64, clean_in: Option<u64>, result: MapResult) -> MapTrace {
    MapTrace {
        in_bytes,
        clean_in,
        result,
    }
}

/// Stats of the first stage plus the clean stage when both are map stages.
struct MapStats {
    first: StageStats,
    clean: Option<StageStats>,
    bad: u64,
    lines: u64,
}

impl MapStats {
    fn record(&mut self, t: &MapTrace, has_normalizer: bool) {
        self.lines += 1;
        self.first.record_in(t.in_bytes);
        if let Some(c) = &mut self.clean {
            if has_normalizer {
                if let Some(b) = t.clean_in {
                    self.first.record_out(b);
                    c.record_in(b);
                }
            }
        }
        match &t.result {
            MapResult::Malformed => {
                self.bad += 1;
                self.first.record_drop("malformed");
            }
            MapResult::Dropped(Stage::Normalize, r) => self.first.record_drop(r),
            MapResult::Dropped(_, r) => self.clean.as_mut().unwrap_or(&mut self.first).record_drop(r),
            MapResult::Kept(d) => match (&mut self.clean, has_normalizer) {
                (Some(c), true) => c.record_out(d.byte_len()),
                (_, _) => self.first.record_out(d.byte_len()),
            },
        }
    }
}

/// Reads all input lines in order, in batches, with a global ordinal.
fn for_each_batch(
    inputs: &[PathBuf],
    mut f: impl FnMut(Vec<(u64, Vec<u8>)>) -> Result<(), PipelineError>,
) -> Result<(), PipelineError> {
    let mut ordinal = 0u64;
    let mut batch = Vec::with_capacity(BATCH);
    for path in inputs {
        let mut reader = open_reader(path).map_err(|e| PipelineError::io(path, e))?;
        let mut buf = Vec::new();
        loop {
            buf.clear();
            if reader
                .read_until(b'\n', &mut buf)
                .map_err(|e| PipelineError::io(path, e))?
                == 0
            {
                break;
            }
            while matches!(buf.last(), Some(b'\n' | b'\r')) {
                buf.pop();
            }
            if buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            batch.push((ordinal, buf.clone()));
            ordinal += 1;
            if batch.len() == BATCH {
                f(std::mem::take(&mut batch))?;
            }
        }
    }
    if !batch.is_empty() {
        f(batch)?;
    }
    Ok(())
}

/// Output shards, written as `*.partial` and renamed once the run succeeds.
struct ShardWriter {
    dir: PathBuf,
    shard_size: usize,
    current: Option<BufWriter<File>>,
    in_current: usize,
    names: Vec<String>,
}

impl ShardWriter {
    fn new(dir: &Path, shard_size: usize) -> Self {
        Self {
            dir: dir.to_path_buf(),
            shard_size,
            current: None,
            in_current: 0,
            names: Vec::new(),
        }
    }

    fn partial_path(&self, name: &str) -> PathBuf {
        self.dir.join(format!("{name}.partial"))
    }

    fn write(&mut self, doc: &Document) -> io::Result<()> {
        if self.current.is_none() || self.in_current == self.shard_size {
            if let Some(mut w) = self.current.take() {
                w.flush()?;
            }
            let name = format!("part-{:05}.jsonl", self.names.len());
            self.current = Some(BufWriter::new(File::create(self.partial_path(&name))?));
            self.names.push(name);
            self.in_current = 0;
        }
        let w = self.current.as_mut().expect("shard open");
        w.write_all(doc.to_json_line().as_bytes())?;
        w.write_all(b"\n")?;
        self.in_current += 1;
        Ok(())
    }

    fn finish(mut self) -> io::Result<Vec<String>> {
        if let Some(mut w) = self.current.take() {
            w.flush()?;
        }
        for name in &self.names {
            fs::rename(self.partial_path(name), self.dir.join(name))?;
        }
        Ok(self.names)
    }
}

/// A JSONL file that can be scanned repeatedly.
pub struct JsonlSource {
    path: PathBuf,
}

impl JsonlSource {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }
}

impl DocSource for JsonlSource {
    fn scan(&self) -> io::Result<Box<dyn Iterator<Item = io::Result<Document>> + '_>> {
        let reader = BufReader::new(open_reader(&self.path)?);
        Ok(Box::new(
            reader
                .lines()
                .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
                .map(|line| {
                    let line = line?;
                    Document::from_json_line(&line)
                        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
                }),
        ))
    }
}

struct ToxicityRunner {
    matcher: LexiconMatcher,
    model: Option<ToxicityModel>,
    cfg: ToxicityConfig,
    stats: StageStats,
    buffer: Vec<Document>,
}

impl ToxicityRunner {
    fn from_params(p: &ToxicityParams) -> Result<Self, PipelineError> {
        let matcher = match &p.lexicon {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
                LexiconMatcher::with_boundaries(crate::toxicity::parse_lexicon_tsv(&text)?, p.word_boundaries)?
            }
            None if p.word_boundaries => LexiconMatcher::bundled(),
            None => LexiconMatcher::with_boundaries(LexiconMatcher::bundled().entries().to_vec(), false)?,
        };
        let model = p.model.as_deref().map(ToxicityModel::load).transpose()?;
        Ok(Self {
            matcher,
            model,
            cfg: p.thresholds,
            stats: StageStats::new(Stage::Toxicity.name()),
            buffer: Vec::new(),
        })
    }

    fn push(&mut self, doc: Document, out: &mut ShardWriter) -> io::Result<()> {
        self.buffer.push(doc);
        if self.buffer.len() == BATCH {
            self.flush(out)?;
        }
        Ok(())
    }

    fn flush(&mut self, out: &mut ShardWriter) -> io::Result<()> {
        let batch = std::mem::take(&mut self.buffer);
        let model = self.model.as_ref().map(|m| m as &dyn ToxicityScorer);
        for doc in filter_documents(batch, &self.matcher, model, &self.cfg, &mut self.stats) {
            out.write(&doc)?;
        }
        Ok(())
    }
}

/// Final consumer: optional toxicity filter in front of the shard writer.
struct Tail {
    toxicity: Option<ToxicityRunner>,
    writer: ShardWriter,
}

impl Tail {
    fn push(&mut self, doc: Document) -> io::Result<()> {
        match &mut self.toxicity {
            Some(t) => t.push(doc, &mut self.writer),
            None => self.writer.write(&doc),
        }
    }

    fn finish(mut self) -> io::Result<(Option<StageStats>, Vec<String>)> {
        let stats = match &mut self.toxicity {
            Some(t) => {
                t.flush(&mut self.writer)?;
                Some(t.stats.clone())
            }
            None => None,
        };
        Ok((stats, self.writer.finish()?))
    }
}

fn now() -> String {
    humantime::format_rfc3339_millis(SystemTime::now()).to_string()
}

fn clear_previous_outputs(dir: &Path, inputs: &[PathBuf]) -> Result<(), PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        let ours = name.starts_with("part-") && (name.ends_with(".jsonl") || name.ends_with(".jsonl.partial"))
            || name == MANIFEST_FILE
            || name == DEDUP_MANIFEST_FILE;
        if !ours {
            continue;
        }
        if inputs.iter().any(|i| i == &path) {
            return Err(PipelineError::Config(format!(
                "input {} would be overwritten by the output",
                path.display()
            )));
        }
        fs::remove_file(&path).map_err(|e| PipelineError::io(&path, e))?;
    }
    Ok(())
}

/// Lines that failed to parse never reached `stage`; count them as its drops.
fn charge_parse_failures(stage: &mut StageStats, parse: &StageStats) {
    stage.docs_in += parse.docs_in - parse.docs_out;
    stage.bytes_in += parse.bytes_in - parse.bytes_out;
    for (k, v) in &parse.drop_reasons {
        *stage.drop_reasons.entry(k.clone()).or_default() += v;
    }
}

fn execute(cfg: &PipelineConfig, stages: &[Stage]) -> Result<RunManifest, PipelineError> {
    let started = now();
    let out_dir = &cfg.io.output_dir;
    let inputs = expand_globs(&cfg.io.inputs).map_err(|e| PipelineError::Config(e.to_string()))?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(out_dir, e))?;
    clear_previous_outputs(out_dir, &inputs)?;

    let has = |s: Stage| stages.contains(&s);
    let normalizer = has(Stage::Normalize).then(|| {
        Normalizer::new(NormalizerConfig {
            taxonomy: cfg.taxonomy.clone(),
            repair_budget: cfg.stages.normalize.params.repair_budget,
            detect_language: cfg.stages.normalize.params.detect_language,
        })
    });
    let rules = if has(Stage::Clean) {
        let list = match &cfg.stages.clean.params.rules {
            Some(path) => load_rules(path)?,
            None => bundled_rules(),
        };
        for rule in &list {
            if let Some(s) = rule
                .applies_to
                .iter()
                .chain(&rule.except)
                .find(|s| !cfg.taxonomy.contains(s))
            {
                return Err(RuleError::UnknownSource(s.clone()).into());
            }
        }
        Some(RuleSet::compile(list)?)
    } else {
        None
    };
    let toxicity = if has(Stage::Toxicity) {
        Some(ToxicityRunner::from_params(&cfg.stages.toxicity.params)?)
    } else {
        None
    };
    let mut dedup_cfg = cfg.stages.dedup.params.clone();
    dedup_cfg.minhash.seed ^= cfg.seed;

    let has_normalizer = normalizer.is_some();
    let map = MapStages {
        normalizer,
        rules,
        format: match cfg.io.format {
            InputFormat::Jsonl => RawFormat::Json,
            InputFormat::Text => RawFormat::PlainText,
        },
        default_source: cfg.io.default_source.clone(),
    };
    let first_stage = stages.first().copied().unwrap_or(Stage::Normalize);
    // Parsing failures are charged to the first stage even when it is not a
    // map stage.
    let mut mstats = MapStats {
        first: StageStats::new(if has_normalizer {
            Stage::Normalize.name()
        } else {
            first_stage.name()
        }),
        clean: (has_normalizer && map.rules.is_some()).then(|| StageStats::new(Stage::Clean.name())),
        bad: 0,
        lines: 0,
    };
    if !has_normalizer && map.rules.is_some() {
        mstats.first = StageStats::new(Stage::Clean.name());
    }
    let map_is_stage = has_normalizer || map.rules.is_some();

    let mut tail = Tail {
        toxicity,
        writer: ShardWriter::new(out_dir, cfg.io.shard_size),
    };
    let work_dir = out_dir.join(WORK_DIR);
    let io_err = |p: &Path| {
        let p = p.to_path_buf();
        move |e: io::Error| PipelineError::Io { path: p, source: e }
    };

    let check_bad = |bad: u64| match cfg.max_bad_records {
        Some(max) if bad > max => Err(PipelineError::TooManyBadRecords { bad, allowed: max }),
        _ => Ok(()),
    };

    let mut dedup_stats = None;
    let mut dedup_manifest = None;
    if has(Stage::Dedup) {
        fs::create_dir_all(&work_dir).map_err(io_err(&work_dir))?;
        let work_file = work_dir.join("map.jsonl");
        {
            let mut w = BufWriter::new(File::create(&work_file).map_err(io_err(&work_file))?);
            for_each_batch(&inputs, |batch| {
                let traces: Vec<MapTrace> = batch.par_iter().map(|(o, raw)| map.run(raw, *o)).collect();
                for t in traces {
                    mstats.record(&t, has_normalizer);
                    if let MapResult::Kept(d) = t.result {
                        w.write_all(d.to_json_line().as_bytes()).map_err(io_err(&work_file))?;
                        w.write_all(b"\n").map_err(io_err(&work_file))?;
                    }
                }
                check_bad(mstats.bad)
            })?;
            w.flush().map_err(io_err(&work_file))?;
        }
        let source = JsonlSource::new(&work_file);
        let report = dedup_stage(&source, &dedup_cfg, &mut |d| tail.push(d))?;
        let manifest_path = out_dir.join(DEDUP_MANIFEST_FILE);
        fs::write(&manifest_path, report.manifest_jsonl()).map_err(io_err(&manifest_path))?;
        dedup_manifest = Some(DEDUP_MANIFEST_FILE.to_string());
        dedup_stats = Some(report.stats);
        fs::remove_dir_all(&work_dir).map_err(io_err(&work_dir))?;
    } else {
        let mut sink_err = None;
        for_each_batch(&inputs, |batch| {
            let traces: Vec<MapTrace> = batch.par_iter().map(|(o, raw)| map.run(raw, *o)).collect();
            for t in traces {
                mstats.record(&t, has_normalizer);
                if let MapResult::Kept(d) = t.result {
                    if let Err(e) = tail.push(d) {
                        sink_err = Some(e);
                    }
                }
            }
            if let Some(e) = sink_err.take() {
                return Err(PipelineError::io(out_dir, e));
            }
            check_bad(mstats.bad)
        })?;
    }

    let allowed = cfg
        .max_bad_records
        .unwrap_or((mstats.lines as f64 * DEFAULT_BAD_RECORD_FRACTION).floor() as u64);
    if mstats.bad > allowed {
        return Err(PipelineError::TooManyBadRecords {
            bad: mstats.bad,
            allowed,
        });
    }

    let (tox_stats, shards) = tail.finish().map_err(io_err(out_dir))?;

    let mut per_stage = Vec::new();
    let bad = mstats.bad;
    if map_is_stage {
        per_stage.push(mstats.first.clone());
        per_stage.extend(mstats.clean);
    }
    let mut rest: Vec<StageStats> = dedup_stats.into_iter().chain(tox_stats).collect();
    if !map_is_stage {
        if let Some(s) = rest.first_mut() {
            charge_parse_failures(s, &mstats.first);
        }
    }
    per_stage.extend(rest);

    let manifest = RunManifest {
        config_hash: cfg.hash(),
        stages: stages.to_vec(),
        per_stage,
        started,
        finished: now(),
        shards,
        bad_records: bad,
        dedup_manifest,
    };
    let path = out_dir.join(MANIFEST_FILE);
    crate::io::write_json(&path, &manifest).map_err(io_err(&path))?;
    Ok(manifest)
}
