//! Generate a corpus with planted duplicates, boilerplate and toxic documents,
//! run the full pipeline over it and compare with the answer key.
//!
//! ```bash
//! cargo run --release -p corpusforge --example planted_pipeline -- [out_dir]
//! ```

use std::path::PathBuf;

use corpusforge::io::write_documents;
use corpusforge::pipeline::{run_pipeline, PipelineConfig};
use corpusforge::synth::{planted_corpus, PlantSpec};

fn main() {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("corpusforge-demo"));
    std::fs::create_dir_all(&out).unwrap();
    let corpus = planted_corpus(&PlantSpec::default(), 1);
    let input = out.join("input.jsonl");
    write_documents(&input, &corpus.docs).unwrap();

    let mut cfg = PipelineConfig::default();
    cfg.io.inputs = vec![input.to_string_lossy().into_owned()];
    cfg.io.output_dir = out.join("clean");
    let t = std::time::Instant::now();
    let manifest = run_pipeline(&cfg).unwrap();
    println!(
        "ran in {:.2}s, config {}",
        t.elapsed().as_secs_f64(),
        manifest.config_hash
    );
    for s in &manifest.per_stage {
        println!(
            "{:<10} {:>5} -> {:>5}  {:?}",
            s.stage, s.docs_in, s.docs_out, s.drop_reasons
        );
    }
    println!(
        "expected survivors {}, got {}; shards {:?} in {}",
        corpus.key.expected_survivors(),
        manifest.per_stage.last().map_or(0, |s| s.docs_out),
        manifest.shards,
        cfg.io.output_dir.display()
    );
}
