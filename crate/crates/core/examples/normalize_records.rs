//! Turn raw records (JSON lines, plain text, broken bytes) into documents.
//!
//! ```bash
//! cargo run -p corpusforge --example normalize_records
//! ```

use corpusforge::normalize::{Normalizer, NormalizerConfig, RawFormat};

fn main() {
    let normalizer = Normalizer::new(NormalizerConfig::default());
    let raw: Vec<(&[u8], RawFormat)> = vec![
        (
            br#"{"id":"n1","source":"news","content":"Markets rallied after the central bank held rates steady."}"#,
            RawFormat::Json,
        ),
        (
            "\u{FEFF}Ｆｕｌｌｗｉｄｔｈ text and\r\nWindows line endings".as_bytes(),
            RawFormat::PlainText,
        ),
        (
            "机器学习模型需要大量高质量的训练数据，数据清洗是关键步骤。".as_bytes(),
            RawFormat::PlainText,
        ),
        (
            b"Ceci est un texte en fran\xe7ais avec un octet invalide.",
            RawFormat::PlainText,
        ),
        (
            br#"{"content": "no source key, falls back to the default"}"#,
            RawFormat::Json,
        ),
        (
            br#"{"source":"blog","content":"blog is not a known source"}"#,
            RawFormat::Json,
        ),
        (b"{broken json", RawFormat::Json),
    ];

    for (ordinal, (bytes, format)) in raw.into_iter().enumerate() {
        match normalizer.normalize_record(bytes, "web", format, ordinal as u64) {
            Ok(doc) => println!(
                "ok    {:<28} lang={:<3} {:?}",
                doc.id,
                doc.lang.as_deref().unwrap_or("-"),
                doc.content
            ),
            Err(e) => println!("drop  [{}] {e}", e.reason()),
        }
    }
}
