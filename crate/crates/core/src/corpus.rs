//! Canonical record types shared by every stage.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    pub content: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RecordError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("missing or non-string required key `{0}`")]
    MissingKey(&'static str),
    #[error("key `{0}` must be a string")]
    NotAString(String),
    #[error("`id` must be non-empty")]
    EmptyId,
}

impl Document {
    pub fn new(id: impl Into<String>, source: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            url: None,
            lang: None,
            content: content.into(),
            meta: BTreeMap::new(),
        }
    }

    pub fn with_url(mut self, url: impl Into<String>) -> Self {
        self.url = Some(url.into());
        self
    }

    pub fn with_lang(mut self, lang: impl Into<String>) -> Self {
        self.lang = Some(lang.into());
        self
    }

    /// Parse one JSONL line. Requires `id`, `source` and `content`; keys
    /// outside the schema are kept in `meta` under an `x_` prefix.
    pub fn from_json_line(line: &str) -> Result<Self, RecordError> {
        let value: Value = serde_json::from_str(line).map_err(|e| RecordError::Json(e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(RecordError::NotAnObject);
        };
        let fields = RecordFields::from_object(obj)?;
        let id = fields.id.ok_or(RecordError::MissingKey("id"))?;
        if id.is_empty() {
            return Err(RecordError::EmptyId);
        }
        Ok(Document {
            id,
            source: fields.source.ok_or(RecordError::MissingKey("source"))?,
            url: fields.url,
            lang: fields.lang,
            content: fields.content.ok_or(RecordError::MissingKey("content"))?,
            meta: fields.meta,
        })
    }

    /// Serialize to a single JSON line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("document serialization is infallible")
    }

    /// Content size in bytes.
    pub fn byte_len(&self) -> u64 {
        self.content.len() as u64
    }
}

/// Loosely typed view of a record object, shared by strict parsing and by
/// the normalizer's raw ingest.
#[derive(Debug, Default)]
pub(crate) struct RecordFields {
    pub id: Option<String>,
    pub source: Option<String>,
    pub url: Option<String>,
    pub lang: Option<String>,
    pub content: Option<String>,
    pub meta: BTreeMap<String, String>,
}

impl RecordFields {
    pub(crate) fn from_object(obj: Map<String, Value>) -> Result<Self, RecordError> {
        let mut out = RecordFields::default();
        for (key, value) in obj {
            match key.as_str() {
                "id" | "source" | "content" | "url" | "lang" => {
                    let s = match value {
                        Value::String(s) => Some(s),
                        Value::Null if key == "url" || key == "lang" => None,
                        _ => return Err(RecordError::NotAString(key)),
                    };
                    match key.as_str() {
                        "id" => out.id = s,
                        "source" => out.source = s,
                        "content" => out.content = s,
                        "url" => out.url = s,
                        _ => out.lang = s,
                    }
                }
                "meta" => match value {
                    Value::Object(m) => {
                        for (k, v) in m {
                            out.meta.insert(k, value_to_string(v));
                        }
                    }
                    Value::Null => {}
                    _ => return Err(RecordError::NotAString(key)),
                },
                _ => {
                    out.meta.insert(format!("x_{key}"), value_to_string(value));
                }
            }
        }
        Ok(out)
    }
}

fn value_to_string(v: Value) -> String {
    match v {
        Value::String(s) => s,
        other => other.to_string(),
    }
}

/// Whether a source's quantity is fixed (books, papers) or keeps growing
/// (web, news).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum SourceClass {
    Static,
    Dynamic,
}

/// The configured source taxonomy: source tag to class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct Taxonomy(pub BTreeMap<String, SourceClass>);

impl Default for Taxonomy {
    fn default() -> Self {
        use SourceClass::*;
        let entries = [
            ("book", Static),
            ("academic", Static),
            ("encyclopedia", Static),
            ("textbook", Static),
            ("poetry", Static),
            ("code", Static),
            ("web", Dynamic),
            ("news", Dynamic),
            ("social", Dynamic),
            ("qa", Dynamic),
            ("forum", Dynamic),
        ];
        Taxonomy(entries.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

impl Taxonomy {
    pub fn class_of(&self, source: &str) -> Option<SourceClass> {
        self.0.get(source).copied()
    }

    pub fn contains(&self, source: &str) -> bool {
        self.0.contains_key(source)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot merge stats of stage `{left}` with stage `{right}`")]
pub struct StageMismatch {
    pub left: String,
    pub right: String,
}

/// Per-stage counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct StageStats {
    pub stage: String,
    pub docs_in: u64,
    pub docs_out: u64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub drop_reasons: BTreeMap<String, u64>,
}

impl StageStats {
    pub fn new(stage: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            ..Default::default()
        }
    }

    pub fn record_in(&mut self, bytes: u64) {
        self.docs_in += 1;
        self.bytes_in += bytes;
    }

    pub fn record_out(&mut self, bytes: u64) {
        self.docs_out += 1;
        self.bytes_out += bytes;
    }

    pub fn record_drop(&mut self, reason: &str) {
        *self.drop_reasons.entry(reason.to_string()).or_insert(0) += 1;
    }

    /// Sum two stats records of the same stage.
    pub fn merge(&self, other: &StageStats) -> Result<StageStats, StageMismatch> {
        if self.stage != other.stage {
            return Err(StageMismatch {
                left: self.stage.clone(),
                right: other.stage.clone(),
            });
        }
        let mut out = self.clone();
        out.docs_in += other.docs_in;
        out.docs_out += other.docs_out;
        out.bytes_in += other.bytes_in;
        out.bytes_out += other.bytes_out;
        for (reason, n) in &other.drop_reasons {
            *out.drop_reasons.entry(reason.clone()).or_insert(0) += n;
        }
        Ok(out)
    }

    /// Drop reasons account for every missing document.
    pub fn is_consistent(&self) -> bool {
        self.docs_out <= self.docs_in && self.drop_reasons.values().sum::<u64>() == self.docs_in - self.docs_out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(docs_in: u64, docs_out: u64, reasons: &[(&str, u64)]) -> StageStats {
        StageStats {
            stage: "clean".into(),
            docs_in,
            docs_out,
            bytes_in: docs_in * 10,
            bytes_out: docs_out * 10,
            drop_reasons: reasons.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn merge_with_empty_is_identity() {
        let a = stats(3, 2, &[("x", 1)]);
        let b = stats(0, 0, &[]);
        assert_eq!(a.merge(&b).unwrap(), a);
    }

    #[test]
    fn merge_sums_counters_and_reasons() {
        let a = stats(5, 4, &[("garbled", 1)]);
        let b = stats(5, 3, &[("garbled", 1), ("ad", 1)]);
        let m = a.merge(&b).unwrap();
        assert_eq!((m.docs_in, m.docs_out), (10, 7));
        assert_eq!(m.drop_reasons["garbled"], 2);
        assert_eq!(m.drop_reasons["ad"], 1);
        assert!(m.is_consistent());
    }

    #[test]
    fn merge_rejects_mismatched_stage() {
        let a = StageStats::new("clean");
        let b = StageStats::new("dedup");
        assert!(a.merge(&b).is_err());
    }

    #[test]
    fn unknown_keys_land_in_meta() {
        let d =
            Document::from_json_line(r#"{"id":"a","source":"web","content":"x","title":"T","n":3,"meta":{"k":"v"}}"#)
                .unwrap();
        assert_eq!(d.meta["x_title"], "T");
        assert_eq!(d.meta["x_n"], "3");
        assert_eq!(d.meta["k"], "v");
    }

    #[test]
    fn missing_required_keys_are_errors() {
        assert_eq!(
            Document::from_json_line(r#"{"id":"a","content":"x"}"#),
            Err(RecordError::MissingKey("source"))
        );
        assert_eq!(
            Document::from_json_line(r#"{"id":"","source":"web","content":"x"}"#),
            Err(RecordError::EmptyId)
        );
        assert!(matches!(Document::from_json_line("{nope"), Err(RecordError::Json(_))));
    }

    fn arb_stats() -> impl Strategy<Value = StageStats> {
        (
            0u64..50,
            0u64..50,
            proptest::collection::btree_map("[a-c]", 0u64..5, 0..3),
        )
            .prop_map(|(out, bytes, reasons)| {
                let dropped: u64 = reasons.values().sum();
                StageStats {
                    stage: "s".into(),
                    docs_in: out + dropped,
                    docs_out: out,
                    bytes_in: bytes * 2,
                    bytes_out: bytes,
                    drop_reasons: reasons,
                }
            })
    }

    proptest! {
        #[test]
        fn merge_is_commutative_and_associative(a in arb_stats(), b in arb_stats(), c in arb_stats()) {
            prop_assert_eq!(a.merge(&b).unwrap(), b.merge(&a).unwrap());
            let left = a.merge(&b).unwrap().merge(&c).unwrap();
            let right = a.merge(&b.merge(&c).unwrap()).unwrap();
            prop_assert_eq!(left.clone(), right);
            prop_assert!(left.is_consistent());
        }

        #[test]
        fn document_json_roundtrip(
            id in "[a-z0-9:]{1,12}",
            source in "[a-z]{1,8}",
            content in "\\PC{0,40}",
            url in proptest::option::of("https://[a-z]{1,8}\\.com/[a-z]{0,5}"),
            lang in proptest::option::of("[a-z]{2}"),
            meta in proptest::collection::btree_map("[a-z_]{1,6}", "\\PC{0,8}", 0..4),
        ) {
            let doc = Document { id, source, url, lang, content, meta };
            let back = Document::from_json_line(&doc.to_json_line()).unwrap();
            prop_assert_eq!(back, doc);
        }
    }
}
