//! Train a byte-level BPE tokenizer on the generated multilingual sample and
//! compare its compression ratio with the 256-byte baseline.
//!
//! ```bash
//! cargo run --release -p corpusforge --example train_tokenizer -- [sample_bytes] [vocab_size] [out.json]
//! ```

use corpusforge::sample::{held_out_sentences, multilingual_sample};
use corpusforge::tokenizer::eval::compression_ratio;
use corpusforge::tokenizer::train::{train_bpe, TrainParams};
use corpusforge::tokenizer::TokenizerModel;

fn main() {
    let mut args = std::env::args().skip(1);
    let bytes: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(1 << 20);
    let vocab_size: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(2048);
    let out = args.next();

    let sample = multilingual_sample(bytes, 0);
    let params = TrainParams {
        vocab_size,
        ..TrainParams::default()
    };
    let t = std::time::Instant::now();
    let model = train_bpe(&sample, &params).expect("training succeeds");
    println!(
        "trained {} ids: {} merges, {} reserved, in {:.1}s",
        model.vocab_size(),
        model.merges().len(),
        model.reserved().len(),
        t.elapsed().as_secs_f64()
    );

    for text in [
        "The year 2024 had 366 days.",
        "数据处理流程包括清洗和去重。",
        "🙂 emoji",
    ] {
        let ids = model.encode(text);
        let pieces: Vec<String> = ids
            .iter()
            .map(|&id| String::from_utf8_lossy(model.token_bytes(id).unwrap()).into_owned())
            .collect();
        println!("{text:?} -> {} tokens {pieces:?}", ids.len());
        assert_eq!(model.decode(&ids).unwrap(), text.as_bytes());
    }

    let held = held_out_sentences();
    let trained = compression_ratio(&model, &held).unwrap();
    let baseline = compression_ratio(&TokenizerModel::byte_baseline(), &held).unwrap();
    println!("\n{:<6} {:>16} {:>16}", "lang", "trained", "bytes");
    for (lang, r) in &trained.per_lang {
        println!(
            "{lang:<6} {:>16} {:>16}",
            r.to_string(),
            baseline.per_lang[lang].to_string()
        );
    }
    println!(
        "{:<6} {:>16} {:>16}",
        "all",
        trained.overall.to_string(),
        baseline.overall.to_string()
    );

    if let Some(path) = out {
        model.save(path.as_ref()).unwrap();
        println!("saved {path}");
    }
}
