//! Command-line front end for the `corpusforge` binary.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::allocator::{assign_with, build_index_table, reweight, AssignMode, AssignmentManifest};
use crate::corpus::Document;
use crate::dedup::{DedupLevel, SearchMode};
use crate::io::{expand_globs, open_reader, write_json};
use crate::pipeline::{run_pipeline, run_stages, InputFormat, PipelineConfig, PipelineError, RunManifest, Stage};
use crate::sample::multilingual_sample;
use crate::tokenizer::eval::compression_ratio;
use crate::tokenizer::train::train_bpe;
use crate::tokenizer::TokenizerModel;

#[derive(Debug, Parser)]
#[command(name = "corpusforge", version, about = "Pretraining corpus processing toolkit")]
pub struct Cli {
    /// Print the JSON schema of the pipeline config and exit.
    #[arg(long)]
    pub print_schema: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every enabled stage: normalize, clean, dedup, toxicity.
    Run(CommonArgs),
    /// Raw records to canonical documents.
    Normalize {
        #[command(flatten)]
        common: CommonArgs,
        /// Source tag for records without one.
        #[arg(long)]
        source: Option<String>,
        /// Treat every input line as plain text instead of JSON.
        #[arg(long)]
        text: bool,
        /// Skip language identification.
        #[arg(long)]
        no_langid: bool,
    },
    /// Heuristic cleaning rules.
    Clean {
        #[command(flatten)]
        common: CommonArgs,
        /// Rule file (JSON); the bundled rules when absent.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// URL, simhash, paragraph and sentence deduplication.
    Dedup {
        #[command(flatten)]
        common: CommonArgs,
        /// Level to run (repeatable): url, simhash, paragraph, sentence.
        #[arg(long = "level", value_parser = parse_level)]
        levels: Vec<DedupLevel>,
        /// Simhash Hamming threshold.
        #[arg(long)]
        k: Option<u32>,
        /// Brute-force simhash search (required for k > 3).
        #[arg(long)]
        exact: bool,
        /// Paragraph cosine threshold.
        #[arg(long)]
        threshold: Option<f64>,
        /// Documents a sentence must appear in to count as boilerplate.
        #[arg(long)]
        min_repeat: Option<usize>,
    },
    /// Lexicon and classifier toxicity filtering.
    Toxicity {
        #[command(flatten)]
        common: CommonArgs,
        /// Lexicon TSV; the bundled one when absent.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Classifier model JSON.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Weighted lexicon matches per 1000 characters above which a document is dropped.
        #[arg(long)]
        max_matches: Option<f64>,
        /// Classifier score at or above which a document is dropped.
        #[arg(long)]
        score_threshold: Option<f64>,
    },
    /// Byte-level BPE tokenizer.
    #[command(subcommand)]
    Tokenizer(TokenizerCommand),
    /// Build the file index table and assign files to workers.
    Allocate(AllocateArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Pipeline config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input glob (repeatable).
    #[arg(long = "input")]
    pub inputs: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Where to write stage statistics.
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[arg(long, env = "CORPUSFORGE_THREADS")]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Malformed lines tolerated before aborting.
    #[arg(long)]
    pub max_bad_records: Option<u64>,
    /// Documents per output shard.
    #[arg(long)]
    pub shard_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum TokenizerCommand {
    /// Train a model on JSONL documents or on the built-in sample.
    Train {
        /// Pipeline config; its `tokenizer` section supplies defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// JSONL document glob (repeatable).
        #[arg(long = "input")]
        inputs: Vec<String>,
        /// Train on this many bytes of the built-in multilingual sample instead.
        #[arg(long, conflicts_with = "inputs")]
        sample_bytes: Option<usize>,
        #[arg(long, default_value_t = 0)]
        sample_seed: u64,
        /// Model file to write.
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        reserved: Option<usize>,
        /// Special token (repeatable); replaces the configured list.
        #[arg(long = "special")]
        specials: Vec<String>,
        #[arg(long)]
        no_digit_split: bool,
        #[arg(long, env = "CORPUSFORGE_THREADS")]
        threads: Option<usize>,
        #[arg(long)]
        max_bad_records: Option<u64>,
    },
    /// Print token ids, one JSON array per input line.
    Encode {
        #[arg(long)]
        model: PathBuf,
        /// Text file, one text per line; stdin when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Input lines are JSONL documents; their content is encoded.
        #[arg(long)]
        jsonl: bool,
    },
    /// Compression ratio (tokens per character) per language.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// JSONL documents; `lang` groups the report.
        #[arg(long)]
        input: PathBuf,
        /// Report file; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        max_bad_records: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct AllocateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus file glob (repeatable). The parent directory name is the source tag.
    #[arg(long = "input")]
    pub inputs: Vec<String>,
    /// Source tag for every file, instead of the parent directory name.
    #[arg(long)]
    pub source: Option<String>,
    #[arg(long)]
    pub workers: Option<u32>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub static_factor: Option<u32>,
    #[arg(long)]
    pub dynamic_rate: Option<f64>,
    /// round_robin or size_balanced.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<AssignMode>,
    /// Manifest file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_level(s: &str) -> Result<DedupLevel, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown level `{s}` (url, simhash, paragraph, sentence)"))
}

fn parse_mode(s: &str) -> Result<AssignMode, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown mode `{s}` (round_robin, size_balanced)"))
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for bad invocations and configs, 1 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Pipeline(PipelineError::Config(_)) => 2,
            _ => 1,
        }
    }
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn io_failed(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Failed(format!("{}: {e}", path.display()))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    Ok(match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    })
}

/// Config file first, then command-line overrides.
fn resolve(common: &CommonArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = load_config(common.config.as_deref())?;
    if !common.inputs.is_empty() {
        cfg.io.inputs = common.inputs.clone();
    }
    if let Some(o) = &common.output {
        cfg.io.output_dir = o.clone();
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.max_bad_records.is_some() {
        cfg.max_bad_records = common.max_bad_records;
    }
    if let Some(n) = common.shard_size {
        cfg.io.shard_size = n;
    }
    Ok(cfg)
}

fn write_stats<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    match path {
        Some(p) => write_json(p, value).map_err(io_failed(p)),
        None => Ok(()),
    }
}

fn run_one(cfg: PipelineConfig, stage: Stage, stats: Option<&Path>) -> Result<(), CliError> {
    cfg.validate()?;
    let manifest = run_stages(&cfg, &[stage])?;
    let stage_stats = manifest
        .per_stage
        .first()
        .cloned()
        .unwrap_or_else(|| crate::corpus::StageStats::new(stage.name()));
    write_stats(stats, &stage_stats)?;
    report(&manifest);
    Ok(())
}

fn report(m: &RunManifest) {
    for s in &m.per_stage {
        eprintln!(
            "{}: {} -> {} docs, {} -> {} bytes",
            s.stage, s.docs_in, s.docs_out, s.bytes_in, s.bytes_out
        );
    }
    if m.bad_records > 0 {
        eprintln!("skipped {} malformed records", m.bad_records);
    }
}

/// Parse and run. Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    if cli.print_schema {
        println!("{}", PipelineConfig::schema_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage("no subcommand given; see --help".into()));
    };
    match command {
        Command::Run(common) => {
            let cfg = resolve(&common)?;
            let manifest = run_pipeline(&cfg)?;
            write_stats(common.stats.as_deref(), &manifest.per_stage)?;
            report(&manifest);
            Ok(())
        }
        Command::Normalize {
            common,
            source,
            text,
            no_langid,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(s) = source {
                cfg.io.default_source = s;
            }
            if text {
                cfg.io.format = InputFormat::Text;
            }
            if no_langid {
                cfg.stages.normalize.params.detect_language = false;
            }
            run_one(cfg, Stage::Normalize, common.stats.as_deref())
        }
        Command::Clean { common, rules } => {
            let mut cfg = resolve(&common)?;
            if rules.is_some() {
                cfg.stages.clean.params.rules = rules;
            }
            run_one(cfg, Stage::Clean, common.stats.as_deref())
        }
        Command::Dedup {
            common,
            levels,
            k,
            exact,
            threshold,
            min_repeat,
        } => {
            let mut cfg = resolve(&common)?;
            let d = &mut cfg.stages.dedup.params;
            if !levels.is_empty() {
                d.levels = levels;
            }
            if let Some(k) = k {
                d.simhash_k = k;
            }
            if exact {
                d.search = SearchMode::Exact;
            }
            if let Some(t) = threshold {
                d.paragraph_threshold = t;
            }
            if let Some(m) = min_repeat {
                d.min_repeat = m;
            }
            run_one(cfg, Stage::Dedup, common.stats.as_deref())
        }
        Command::Toxicity {
            common,
            lexicon,
            model,
            max_matches,
            score_threshold,
        } => {
            let mut cfg = resolve(&common)?;
            let t = &mut cfg.stages.toxicity.params;
            if lexicon.is_some() {
                t.lexicon = lexicon;
            }
            if model.is_some() {
                t.model = model;
            }
            if let Some(m) = max_matches {
                t.thresholds.max_matches = m;
            }
            if let Some(s) = score_threshold {
                t.thresholds.score_threshold = s;
            }
            run_one(cfg, Stage::Toxicity, common.stats.as_deref())
        }
        Command::Tokenizer(cmd) => tokenizer(cmd),
        Command::Allocate(args) => allocate(args),
    }
}

/// Documents from JSONL files, skipping malformed lines up to `max_bad`.
fn read_documents(paths: &[PathBuf], max_bad: Option<u64>) -> Result<Vec<Document>, CliError> {
    let mut docs = Vec::new();
    let mut bad = 0u64;
    let mut lines = 0u64;
    for path in paths {
        let reader = open_reader(path).map_err(io_failed(path))?;
        for line in reader.lines() {
            let line = line.map_err(io_failed(path))?;
            if line.trim().is_empty() {
                continue;
            }
            lines += 1;
            match Document::from_json_line(&line) {
                Ok(d) => docs.push(d),
                Err(e) => {
                    bad += 1;
                    eprintln!("{}:{lines}: skipped: {e}", path.display());
                }
            }
        }
    }
    let allowed = max_bad.unwrap_or((lines as f64 * crate::pipeline::DEFAULT_BAD_RECORD_FRACTION).floor() as u64);
    if bad > allowed {
        return Err(PipelineError::TooManyBadRecords { bad, allowed }.into());
    }
    Ok(docs)
}

fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R, CliError> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        b = b.num_threads(n);
    }
    Ok(b.build().map_err(failed)?.install(f))
}

fn tokenizer(cmd: TokenizerCommand) -> Result<(), CliError> {
    match cmd {
        TokenizerCommand::Train {
            config,
            inputs,
            sample_bytes,
            sample_seed,
            output,
            vocab_size,
            reserved,
            specials,
            no_digit_split,
            threads,
            max_bad_records,
        } => {
            let cfg = load_config(config.as_deref())?;
            let mut params = cfg.tokenizer.clone();
            if let Some(v) = vocab_size {
                params.vocab_size = v;
            }
            if let Some(r) = reserved {
                params.reserved_slots = r;
            }
            if !specials.is_empty() {
                params.specials = specials;
            }
            if no_digit_split {
                params.digit_split = false;
            }
            let texts: Vec<String> = match sample_bytes {
                Some(n) => multilingual_sample(n, sample_seed),
                None => {
                    let globs = if inputs.is_empty() {
                        cfg.io.inputs.clone()
                    } else {
                        inputs
                    };
                    let paths = expand_globs(&globs).map_err(|e| CliError::Usage(e.to_string()))?;
                    if paths.is_empty() {
                        return Err(CliError::Usage("no input files; pass --input or --sample-bytes".into()));
                    }
                    read_documents(&paths, max_bad_records.or(cfg.max_bad_records))?
                        .into_iter()
                        .map(|d| d.content)
                        .collect()
                }
            };
            let model = with_threads(threads.or(cfg.threads), || train_bpe(&texts, &params))?.map_err(failed)?;
            model.save(&output).map_err(failed)?;
            eprintln!(
                "trained {} tokens ({} merges, {} reserved) -> {}",
                model.vocab_size(),
                model.merges().len(),
                model.reserved().len(),
                output.display()
            );
            Ok(())
        }
        TokenizerCommand::Encode { model, input, jsonl } => {
            let model = TokenizerModel::load(&model).map_err(failed)?;
            let reader: Box<dyn BufRead> = match &input {
                Some(p) => open_reader(p).map_err(io_failed(p))?,
                None => Box::new(io::stdin().lock()),
            };
            let mut out = io::BufWriter::new(io::stdout().lock());
            for (n, line) in reader.split(b'\n').enumerate() {
                let mut line = line.map_err(failed)?;
                if line.last() == Some(&b'\r') {
                    line.pop();
                }
                let ids = if jsonl {
                    let text = String::from_utf8(line).map_err(|_| failed(format!("line {}: not UTF-8", n + 1)))?;
                    let doc = Document::from_json_line(&text).map_err(|e| failed(format!("line {}: {e}", n + 1)))?;
                    model.encode(&doc.content)
                } else {
                    model.encode_bytes(&line)
                };
                serde_json::to_writer(&mut out, &ids).map_err(failed)?;
                out.write_all(b"\n").map_err(failed)?;
            }
            out.flush().map_err(failed)
        }
        TokenizerCommand::Eval {
            model,
            input,
            output,
            max_bad_records,
        } => {
            let model = TokenizerModel::load(&model).map_err(failed)?;
            let docs = read_documents(std::slice::from_ref(&input), max_bad_records)?;
            let texts: Vec<(String, String)> = docs
                .into_iter()
                .filter(|d| !d.content.is_empty())
                .map(|d| (d.lang.unwrap_or_else(|| "und".to_string()), d.content))
                .collect();
            let report = compression_ratio(&model, &texts).map_err(failed)?;
            let json = serde_json::to_string_pretty(&report).map_err(failed)? + "\n";
            for (lang, r) in &report.per_lang {
                eprintln!("{lang}: {r}");
            }
            eprintln!("overall: {}", report.overall);
            match output {
                Some(p) => fs::write(&p, json).map_err(io_failed(&p)),
                None => io::stdout().write_all(json.as_bytes()).map_err(failed),
            }
        }
    }
}

fn allocate(args: AllocateArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let globs = if args.inputs.is_empty() {
        cfg.io.inputs.clone()
    } else {
        args.inputs
    };
    let paths = expand_globs(&globs).map_err(|e| CliError::Usage(e.to_string()))?;
    let mut files = Vec::with_capacity(paths.len());
    for p in &paths {
        let size = fs::metadata(p).map_err(io_failed(p))?.len();
        let source = match &args.source {
            Some(s) => s.clone(),
            None => p
                .parent()
                .and_then(Path::file_name)
                .and_then(|n| n.to_str())
                .ok_or_else(|| {
                    CliError::Usage(format!("{}: no parent directory to take the source from", p.display()))
                })?
                .to_string(),
        };
        files.push((p.to_string_lossy().into_owned(), source, size));
    }
    let seed = args.seed.unwrap_or(cfg.seed);
    let workers = args.workers.unwrap_or(cfg.allocator.workers);
    let factor = args.static_factor.unwrap_or(cfg.allocator.weights.static_factor);
    let rate = args.dynamic_rate.unwrap_or(cfg.allocator.weights.dynamic_rate);
    let mode = args.mode.unwrap_or(cfg.allocator.mode);

    let table = build_index_table(&files, &cfg.taxonomy, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let table = reweight(&table, factor, rate, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    let assignment = assign_with(&table, workers, mode).map_err(|e| CliError::Usage(e.to_string()))?;
    let json = AssignmentManifest::new(&table, &assignment).to_json() + "\n";
    eprintln!(
        "{} files, {} occurrences over {workers} workers",
        table.entries.len(),
        table.occurrences.len()
    );
    match args.output {
        Some(p) => fs::write(&p, json).map_err(io_failed(&p)),
        None => io::stdout().write_all(json.as_bytes()).map_err(failed),
    }
}
