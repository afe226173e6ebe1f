use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use corpusforge::corpus::{Document, StageStats};
use corpusforge::synth::{planted_corpus, PlantSpec};

fn corpusforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_corpusforge"))
        .args(args)
        .env_remove("CORPUSFORGE_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = corpusforge(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn shard_docs(dir: &Path) -> Vec<Document> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("part-") && n.ends_with(".jsonl"))
        .collect();
    names.sort();
    names
        .iter()
        .flat_map(|n| {
            fs::read_to_string(dir.join(n))
                .unwrap()
                .lines()
                .map(|l| Document::from_json_line(l).unwrap())
                .collect::<Vec<_>>()
        })
        .collect()
}

fn shard_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("part-"))
        .map(|p| {
            (
                p.file_name().unwrap().to_str().unwrap().to_string(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn dedup_simhash_keeps_one_of_two_identical_docs() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let body = "the quick brown fox jumps over the lazy dog near the river bank every single morning";
    let docs = [Document::new("b", "web", body), Document::new("a", "web", body)];
    corpusforge::io::write_documents(&input, &docs).unwrap();
    let out = dir.path().join("out");
    let stats = dir.path().join("stats.json");
    ok(&[
        "dedup",
        "--level",
        "simhash",
        "--k",
        "3",
        "--input",
        s(&input),
        "--output",
        s(&out),
        "--stats",
        s(&stats),
    ]);

    let kept = shard_docs(&out);
    assert_eq!(kept.len(), 1);
    assert_eq!(kept[0].id, "a");
    let st: StageStats = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!((st.stage.as_str(), st.docs_in, st.docs_out), ("dedup", 2, 1));
    assert_eq!(st.drop_reasons["simhash_duplicate"], 1);
    let manifest = fs::read_to_string(out.join("dedup_manifest.jsonl")).unwrap();
    assert!(manifest.contains(r#""cluster_representative":"a""#), "{manifest}");
}

#[test]
fn tokenizer_train_encode_eval() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.json");
    ok(&[
        "tokenizer",
        "train",
        "--sample-bytes",
        "200000",
        "--vocab-size",
        "1024",
        "--output",
        s(&model),
    ]);

    let held = dir.path().join("held.jsonl");
    let docs = [
        Document::new("1", "web", "The weather is nice today and we walk outside.").with_lang("en"),
        Document::new("2", "web", "Data processing keeps only the useful text.").with_lang("en"),
        Document::new("3", "web", "今天天气很好，我们出去散步。").with_lang("zh"),
    ];
    corpusforge::io::write_documents(&held, &docs).unwrap();
    let out = ok(&["tokenizer", "eval", "--model", s(&model), "--input", s(&held)]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for lang in ["en", "zh"] {
        let r = &report["per_lang"][lang];
        assert!(r["mean"].as_f64().unwrap() > 0.0, "{report}");
        assert!(r["std"].as_f64().unwrap() >= 0.0);
    }
    assert_eq!(report["per_lang"]["en"]["count"], 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("en: ") && stderr.contains(" ± "), "{stderr}");

    let text = dir.path().join("t.txt");
    fs::write(&text, "hello world 2024\n中文\n").unwrap();
    let out = ok(&["tokenizer", "encode", "--model", s(&model), "--input", s(&text)]);
    let lines: Vec<Vec<u32>> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    let m = corpusforge::tokenizer::TokenizerModel::load(&model).unwrap();
    assert_eq!(m.decode(&lines[0]).unwrap(), b"hello world 2024");
}

#[test]
fn allocate_twice_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    for (src, n) in [("book", 5), ("web", 30), ("code", 4)] {
        let d = dir.path().join("corpus").join(src);
        fs::create_dir_all(&d).unwrap();
        for i in 0..n {
            fs::write(d.join(format!("{i:03}.jsonl")), "x".repeat(10 + i)).unwrap();
        }
    }
    let glob = format!("{}/corpus/*/*.jsonl", dir.path().display());
    let a = ok(&["allocate", "--input", &glob, "--workers", "4", "--seed", "7"]).stdout;
    let b = ok(&["allocate", "--input", &glob, "--workers", "4", "--seed", "7"]).stdout;
    assert_eq!(a, b);
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let counts: Vec<usize> = m["workers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|w| w["files"].as_array().unwrap().len())
        .collect();
    assert_eq!(counts.len(), 4);
    assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
    // 9 static files twice each, plus the web files that survive downsampling.
    assert!(counts.iter().sum::<usize>() >= 18);
}

#[test]
fn chained_subcommands_match_run() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = planted_corpus(
        &PlantSpec {
            total: 300,
            url_duplicates: 30,
            near_duplicates: 30,
            paragraph_duplicates: 15,
            boilerplate_docs: 40,
            toxic: 15,
        },
        3,
    );
    let input = dir.path().join("in.jsonl");
    corpusforge::io::write_documents(&input, &corpus.docs).unwrap();
    let p = |n: &str| dir.path().join(n);

    ok(&[
        "run",
        "--input",
        s(&input),
        "--output",
        s(&p("run")),
        "--shard-size",
        "50",
    ]);
    ok(&[
        "normalize",
        "--input",
        s(&input),
        "--output",
        s(&p("n")),
        "--shard-size",
        "50",
    ]);
    let g = |n: &str| format!("{}/part-*.jsonl", p(n).display());
    ok(&[
        "clean",
        "--input",
        &g("n"),
        "--output",
        s(&p("c")),
        "--shard-size",
        "50",
    ]);
    ok(&[
        "dedup",
        "--input",
        &g("c"),
        "--output",
        s(&p("d")),
        "--shard-size",
        "50",
    ]);
    ok(&[
        "toxicity",
        "--input",
        &g("d"),
        "--output",
        s(&p("t")),
        "--shard-size",
        "50",
    ]);

    let run = shard_bytes(&p("run"));
    assert!(!run.is_empty());
    assert_eq!(run, shard_bytes(&p("t")));
    assert_eq!(
        fs::read(p("run/dedup_manifest.jsonl")).unwrap(),
        fs::read(p("d/dedup_manifest.jsonl")).unwrap()
    );
}

#[test]
fn malformed_lines_are_counted_then_abort() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let mut text = String::new();
    for i in 0..20 {
        text.push_str(&format!(
            "{{\"id\":\"d{i}\",\"source\":\"web\",\"content\":\"document number {i} has text\"}}\n"
        ));
    }
    text.push_str("{not json\n");
    text.push_str("[1,2]\n");
    fs::write(&input, text).unwrap();

    let out = dir.path().join("out");
    let stats = dir.path().join("stats.json");
    ok(&[
        "normalize",
        "--input",
        s(&input),
        "--output",
        s(&out),
        "--stats",
        s(&stats),
        "--max-bad-records",
        "2",
    ]);
    let st: StageStats = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!((st.docs_in, st.docs_out), (22, 20));
    assert_eq!(st.drop_reasons["malformed"], 2);

    let res = corpusforge(&[
        "normalize",
        "--input",
        s(&input),
        "--output",
        s(&out),
        "--max-bad-records",
        "1",
    ]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("malformed"));
    assert!(!out.join("manifest.json").exists());
    // 0.1% of 22 lines rounds down to zero tolerated records.
    let res = corpusforge(&["normalize", "--input", s(&input), "--output", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn empty_input_gives_zero_stats() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    fs::write(&input, "").unwrap();
    let out = dir.path().join("out");
    let stats = dir.path().join("stats.json");
    ok(&["run", "--input", s(&input), "--output", s(&out), "--stats", s(&stats)]);
    let per_stage: Vec<StageStats> = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
    assert_eq!(per_stage.len(), 4);
    assert!(per_stage
        .iter()
        .all(|st| st.docs_in == 0 && st.docs_out == 0 && st.bytes_in == 0));
    assert!(shard_docs(&out).is_empty());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["shards"].as_array().unwrap().len(), 0);
}

#[test]
fn schema_and_config_errors() {
    let out = ok(&["--print-schema"]);
    let schema: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(schema["properties"]["stages"].is_object());

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"stages": {"dedup": {"params": {"simhash_k": 9}}}}"#).unwrap();
    let res = corpusforge(&["run", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("simhash_k"));

    fs::write(&cfg, r#"{"sede": 1}"#).unwrap();
    let res = corpusforge(&["run", "--config", s(&cfg)]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("unknown field"));
}

#[test]
fn config_file_drives_run_and_threads_env_is_honoured() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.jsonl");
    let corpus = planted_corpus(
        &PlantSpec {
            total: 120,
            url_duplicates: 10,
            near_duplicates: 10,
            paragraph_duplicates: 5,
            boilerplate_docs: 20,
            toxic: 5,
        },
        9,
    );
    corpusforge::io::write_documents(&input, &corpus.docs).unwrap();
    let cfg = dir.path().join("cfg.json");
    let out = dir.path().join("out");
    fs::write(
        &cfg,
        serde_json::json!({
            "io": {"inputs": [input], "output_dir": out, "shard_size": 40},
            "stages": {"toxicity": {"enabled": false}}
        })
        .to_string(),
    )
    .unwrap();
    let res = Command::new(env!("CARGO_BIN_EXE_corpusforge"))
        .args(["run", "--config", s(&cfg)])
        .env("CORPUSFORGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["stages"], serde_json::json!(["normalize", "clean", "dedup"]));
    // Toxic documents pass through when the stage is off.
    let ids: Vec<String> = shard_docs(&out).into_iter().map(|d| d.id).collect();
    assert!(corpus.key.toxic.iter().all(|t| ids.contains(t)));

    let res = Command::new(env!("CARGO_BIN_EXE_corpusforge"))
        .args(["run", "--config", s(&cfg)])
        .env("CORPUSFORGE_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(2));
}
