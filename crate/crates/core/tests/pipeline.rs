use std::fs;
use std::io::Write;
use std::path::Path;

use flate2::write::GzEncoder;
use proptest::prelude::*;

use corpusforge::corpus::{Document, StageStats};
use corpusforge::io::write_documents;
use corpusforge::pipeline::{run_pipeline, run_stages, PipelineConfig, PipelineError, Stage};
use corpusforge::synth::{planted_corpus, PlantSpec};

fn config(inputs: &[&Path], out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.io.inputs = inputs.iter().map(|p| p.to_string_lossy().into_owned()).collect();
    cfg.io.output_dir = out.to_path_buf();
    cfg
}

fn small_spec() -> PlantSpec {
    PlantSpec {
        total: 200,
        url_duplicates: 20,
        near_duplicates: 20,
        paragraph_duplicates: 10,
        boilerplate_docs: 30,
        toxic: 10,
    }
}

#[test]
fn shard_stats_merge_to_the_sequential_stats() {
    let corpus = planted_corpus(&small_spec(), 21);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = corpus.docs.split_at(83);
    let pa = dir.path().join("a.jsonl");
    let pb = dir.path().join("b.jsonl");
    let all = dir.path().join("all.jsonl");
    write_documents(&pa, a).unwrap();
    write_documents(&pb, b).unwrap();
    write_documents(&all, &corpus.docs).unwrap();

    let stages = [Stage::Normalize, Stage::Clean];
    let ma = run_stages(&config(&[&pa], &dir.path().join("oa")), &stages).unwrap();
    let mb = run_stages(&config(&[&pb], &dir.path().join("ob")), &stages).unwrap();
    let whole = run_stages(&config(&[&all], &dir.path().join("oall")), &stages).unwrap();
    let merged: Vec<StageStats> = ma
        .per_stage
        .iter()
        .zip(&mb.per_stage)
        .map(|(x, y)| x.merge(y).unwrap())
        .collect();
    assert_eq!(merged, whole.per_stage);
}

#[test]
fn repeated_runs_have_identical_manifests() {
    let corpus = planted_corpus(&small_spec(), 22);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_documents(&input, &corpus.docs).unwrap();
    let m1 = run_pipeline(&config(&[&input], &dir.path().join("o1"))).unwrap();
    let m2 = run_pipeline(&config(&[&input], &dir.path().join("o2"))).unwrap();
    assert_eq!(m1.without_timestamps(), m2.without_timestamps());
    assert!(m1.chain_is_consistent());
    assert_eq!(
        m1.per_stage.last().unwrap().docs_out as usize,
        corpus.key.expected_survivors()
    );
    // Rerunning into the same directory replaces the previous shards.
    let m3 = run_pipeline(&config(&[&input], &dir.path().join("o1"))).unwrap();
    assert_eq!(m1.without_timestamps(), m3.without_timestamps());
}

#[test]
fn retention_per_stage_matches_the_answer_key() {
    let spec = small_spec();
    let corpus = planted_corpus(&spec, 23);
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    write_documents(&input, &corpus.docs).unwrap();
    let m = run_pipeline(&config(&[&input], &dir.path().join("out"))).unwrap();
    let by_stage = |s: &str| m.per_stage.iter().find(|x| x.stage == s).unwrap().clone();
    assert_eq!(by_stage("normalize").docs_out, spec.total as u64);
    assert_eq!(by_stage("clean").docs_out, spec.total as u64);
    let dedup = by_stage("dedup");
    assert_eq!(
        dedup.drop_reasons.get("url_duplicate"),
        Some(&(spec.url_duplicates as u64))
    );
    assert_eq!(
        dedup.drop_reasons.get("simhash_duplicate"),
        Some(&(spec.near_duplicates as u64))
    );
    assert_eq!(
        by_stage("toxicity").drop_reasons.get("toxic_lexicon"),
        Some(&(spec.toxic as u64))
    );
}

#[test]
fn failed_run_leaves_only_partial_shards() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl.gz");
    let mut gz = GzEncoder::new(Vec::new(), flate2::Compression::fast());
    for i in 0..5000 {
        writeln!(
            gz,
            r#"{{"id":"d{i}","source":"web","content":"line number {i} of the corpus"}}"#
        )
        .unwrap();
    }
    let mut bytes = gz.finish().unwrap();
    bytes.extend_from_slice(b"this is not a gzip member");
    fs::write(&input, bytes).unwrap();

    let out = dir.path().join("out");
    let mut cfg = config(&[&input], &out);
    cfg.io.shard_size = 1000;
    cfg.stages.normalize.params.detect_language = false;
    let err = run_stages(&cfg, &[Stage::Normalize]).unwrap_err();
    assert!(matches!(err, PipelineError::Io { .. }), "{err}");
    let names: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert!(!names.is_empty());
    assert!(names.iter().all(|n| n.ends_with(".partial")), "{names:?}");
}

#[test]
fn standalone_stage_charges_parse_failures_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let mut text: String = (0..10)
        .map(|i| Document::new(format!("d{i}"), "web", format!("unique text {i}")).to_json_line() + "\n")
        .collect();
    text.push_str("{\"id\":\"x\"}\n");
    fs::write(&input, text).unwrap();
    let mut cfg = config(&[&input], &dir.path().join("out"));
    cfg.max_bad_records = Some(1);
    let m = run_stages(&cfg, &[Stage::Toxicity]).unwrap();
    let t = &m.per_stage[0];
    assert_eq!((t.stage.as_str(), t.docs_in, t.docs_out), ("toxicity", 11, 10));
    assert_eq!(t.drop_reasons["malformed"], 1);
    assert!(t.is_consistent());
}

#[test]
fn config_roundtrips_and_rejects_unknown_fields() {
    let cfg = PipelineConfig::default();
    let json = serde_json::to_string_pretty(&cfg).unwrap();
    assert_eq!(PipelineConfig::from_json(&json).unwrap(), cfg);
    assert!(PipelineConfig::from_json(r#"{"io": {"shard_sise": 3}}"#).is_err());
    assert!(PipelineConfig::from_json(r#"{"io": {"shard_size": 0}}"#).is_err());
    assert!(PipelineConfig::from_json(r#"{"io": {"default_source": "blog"}}"#).is_err());
    let mut other = cfg.clone();
    other.threads = Some(3);
    other.io.output_dir = "elsewhere".into();
    assert_eq!(other.hash(), cfg.hash());
    other.seed = 1;
    assert_ne!(other.hash(), cfg.hash());
}

fn doc_strategy() -> impl Strategy<Value = (String, String)> {
    let source = prop::sample::select(vec!["web", "book", "news", "code", "social"]);
    let sentence = "[a-z]{2,8}( [a-z]{2,8}){3,12}[.!?]";
    let content = prop::collection::vec(prop::collection::vec(sentence, 1..4).prop_map(|s| s.join(" ")), 1..4)
        .prop_map(|ps| ps.join("\n\n"));
    (source.prop_map(str::to_string), content)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn stage_chain_is_always_consistent(docs in prop::collection::vec(doc_strategy(), 0..40), dup in 0usize..10) {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.jsonl");
        let mut list: Vec<Document> =
            docs.iter().enumerate().map(|(i, (s, c))| Document::new(format!("d{i:03}"), s.clone(), c.clone())).collect();
        for i in 0..dup.min(list.len()) {
            let mut copy = list[i].clone();
            copy.id = format!("e{i:03}");
            list.push(copy);
        }
        write_documents(&input, &list).unwrap();
        let mut cfg = config(&[&input], &dir.path().join("out"));
        cfg.io.shard_size = 7;
        let m = run_pipeline(&cfg).unwrap();
        prop_assert!(m.chain_is_consistent(), "{:?}", m.per_stage);
        prop_assert_eq!(m.per_stage[0].docs_in as usize, list.len());
        let written: usize = m
            .shards
            .iter()
            .map(|s| fs::read_to_string(dir.path().join("out").join(s)).unwrap().lines().count())
            .sum();
        prop_assert_eq!(written as u64, m.per_stage.last().unwrap().docs_out);
        prop_assert_eq!(m.shards.len(), written.div_ceil(7));
    }
}
