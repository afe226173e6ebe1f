//! Raw input to canonical [`Document`]s.

pub mod langid;

use serde_json::Value;
use thiserror::Error;

use crate::corpus::{Document, RecordError, RecordFields, Taxonomy};
use crate::hash::{hash_str, hex64};
pub use langid::{bundled_profiles, detect_language, Detection, LanguageProfile};

/// Default share of invalid UTF-8 bytes that is repaired rather than rejected.
pub const DEFAULT_REPAIR_BUDGET: f64 = 0.001;

const BOM: &str = "\u{FEFF}";

/// How a raw record is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    /// One JSON object.
    Json,
    /// The whole input is the document content.
    PlainText,
}

#[derive(Debug, Error, PartialEq)]
pub enum NormalizeError {
    #[error("source `{0}` is not in the taxonomy")]
    UnknownSource(String),
    #[error("{invalid} of {total} bytes are not valid UTF-8")]
    Encoding { invalid: usize, total: usize },
    #[error("content is empty after normalization")]
    Empty,
    #[error(transparent)]
    Malformed(#[from] RecordError),
}

impl NormalizeError {
    /// Short tag used as a drop reason in stage statistics.
    pub fn reason(&self) -> &'static str {
        match self {
            NormalizeError::UnknownSource(_) => "unknown_source",
            NormalizeError::Encoding { .. } => "encoding",
            NormalizeError::Empty => "empty",
            NormalizeError::Malformed(_) => "malformed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormalizerConfig {
    pub taxonomy: Taxonomy,
    pub repair_budget: f64,
    pub detect_language: bool,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        Self {
            taxonomy: Taxonomy::default(),
            repair_budget: DEFAULT_REPAIR_BUDGET,
            detect_language: true,
        }
    }
}

pub struct Normalizer {
    config: NormalizerConfig,
    profiles: Vec<LanguageProfile>,
}

impl Normalizer {
    pub fn new(config: NormalizerConfig) -> Self {
        Self::with_profiles(config, bundled_profiles())
    }

    pub fn with_profiles(config: NormalizerConfig, profiles: Vec<LanguageProfile>) -> Self {
        Self { config, profiles }
    }

    pub fn config(&self) -> &NormalizerConfig {
        &self.config
    }

    /// Turn one raw record into a [`Document`].
    ///
    /// `source` is used when the record does not carry its own. `ordinal` is
    /// the record's position in the run and only feeds id synthesis.
    pub fn normalize_record(
        &self,
        raw: &[u8],
        source: &str,
        format: RawFormat,
        ordinal: u64,
    ) -> Result<Document, NormalizeError> {
        let text = repair_utf8(raw, self.config.repair_budget)?;
        let text = text.strip_prefix(BOM).unwrap_or(&text);

        let mut fields = match format {
            RawFormat::PlainText => RecordFields {
                content: Some(text.to_string()),
                ..Default::default()
            },
            RawFormat::Json => {
                let value: Value = serde_json::from_str(text).map_err(|e| RecordError::Json(e.to_string()))?;
                let Value::Object(obj) = value else {
                    return Err(RecordError::NotAnObject.into());
                };
                RecordFields::from_object(obj)?
            }
        };

        let source = fields.source.take().unwrap_or_else(|| source.to_string());
        if !self.config.taxonomy.contains(&source) {
            return Err(NormalizeError::UnknownSource(source));
        }
        let content = fields.content.take().ok_or(RecordError::MissingKey("content"))?;
        let content = normalize_content(&content);
        if content.trim().is_empty() {
            return Err(NormalizeError::Empty);
        }

        let id = match fields.id.take().filter(|id| !id.is_empty()) {
            Some(id) => id,
            None => synthesize_id(&source, &content, ordinal),
        };
        let mut doc = Document {
            id,
            source,
            url: fields.url.take().filter(|u| !u.is_empty()),
            lang: fields.lang.take().filter(|l| !l.is_empty()),
            content,
            meta: fields.meta,
        };
        if doc.lang.is_none() && self.config.detect_language {
            let d = detect_language(&doc.content, &self.profiles);
            doc.meta
                .insert("lang_confidence".to_string(), format!("{:.3}", d.confidence));
            doc.lang = Some(d.lang);
        }
        Ok(doc)
    }
}

/// `<source>:<content hash>:<ordinal>`
pub fn synthesize_id(source: &str, content: &str, ordinal: u64) -> String {
    format!("{source}:{}:{ordinal}", hex64(hash_str(content, 0)))
}

/// Decode UTF-8, replacing invalid sequences with U+FFFD as long as the
/// share of invalid bytes stays within `budget`.
pub fn repair_utf8(raw: &[u8], budget: f64) -> Result<String, NormalizeError> {
    let invalid: usize = raw.utf8_chunks().map(|c| c.invalid().len()).sum();
    if invalid == 0 {
        // Safe: every chunk was valid.
        return Ok(String::from_utf8(raw.to_vec()).expect("validated"));
    }
    if invalid as f64 > budget * raw.len() as f64 {
        return Err(NormalizeError::Encoding {
            invalid,
            total: raw.len(),
        });
    }
    Ok(String::from_utf8_lossy(raw).into_owned())
}

/// Strip a leading BOM and normalize line endings to `\n`.
pub fn normalize_content(content: &str) -> String {
    let content = content.strip_prefix(BOM).unwrap_or(content);
    if !content.contains('\r') {
        return content.to_string();
    }
    content.replace("\r\n", "\n").replace('\r', "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn normalizer() -> Normalizer {
        Normalizer::new(NormalizerConfig::default())
    }

    #[test]
    fn crlf_becomes_lf() {
        let doc = normalizer()
            .normalize_record(
                br#"{"content":"hello\r\nworld","source":"web"}"#,
                "web",
                RawFormat::Json,
                0,
            )
            .unwrap();
        assert_eq!(doc.content, "hello\nworld");
        assert_eq!(doc.source, "web");
        assert!(doc.id.starts_with("web:"));
        assert!(doc.id.ends_with(":0"));
    }

    #[test]
    fn bom_is_stripped() {
        let doc = normalizer()
            .normalize_record(b"\xEF\xBB\xBFabc", "book", RawFormat::PlainText, 3)
            .unwrap();
        assert_eq!(doc.content, "abc");
    }

    #[test]
    fn heavy_invalid_utf8_is_rejected() {
        // 1000 bytes, 50 of them (5%) invalid.
        let mut raw = vec![b'a'; 1000];
        for i in 0..50 {
            raw[i * 20] = 0xFF;
        }
        let invalid: usize = raw.utf8_chunks().map(|c| c.invalid().len()).sum();
        assert_eq!(invalid as f64 / raw.len() as f64, 0.05);
        let err = normalizer()
            .normalize_record(&raw, "web", RawFormat::PlainText, 0)
            .unwrap_err();
        assert_eq!(err.reason(), "encoding");
    }

    #[test]
    fn stray_invalid_byte_is_repaired() {
        let mut raw = vec![b'a'; 2000];
        raw[7] = 0xC3; // truncated two-byte sequence
        let doc = normalizer()
            .normalize_record(&raw, "web", RawFormat::PlainText, 0)
            .unwrap();
        assert!(doc.content.contains('\u{FFFD}'));
    }

    #[test]
    fn empty_and_unknown_source() {
        let n = normalizer();
        assert_eq!(
            n.normalize_record(b"  \r\n ", "web", RawFormat::PlainText, 0),
            Err(NormalizeError::Empty)
        );
        assert_eq!(
            n.normalize_record(b"text", "martian", RawFormat::PlainText, 0),
            Err(NormalizeError::UnknownSource("martian".into()))
        );
    }

    #[test]
    fn language_is_attached() {
        let doc = normalizer()
            .normalize_record(
                "Der Morgenzug an die Küste war bereits voll, als wir den Bahnhof erreichten.".as_bytes(),
                "news",
                RawFormat::PlainText,
                0,
            )
            .unwrap();
        assert_eq!(doc.lang.as_deref(), Some("de"));
        assert!(doc.meta.contains_key("lang_confidence"));
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent(content in "[a-zA-Z \r\n.,中文]{1,80}", extra in "[a-z]{0,6}") {
            prop_assume!(!content.trim().is_empty());
            let n = normalizer();
            let raw = serde_json::json!({"content": content, "source": "web", "tag": extra}).to_string();
            let first = n.normalize_record(raw.as_bytes(), "web", RawFormat::Json, 9).unwrap();
            let second = n
                .normalize_record(first.to_json_line().as_bytes(), "web", RawFormat::Json, 9)
                .unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
