//! Sentence segmentation, prefix/suffix fingerprints and corpus-wide
//! boilerplate stripping.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, StageStats};
use crate::hash::{hash_str, hash_u64};

pub const DEFAULT_PREFIX_LEN: usize = 16;
pub const DEFAULT_MIN_REPEAT: usize = 8;

/// Meta key set on documents whose whole content was boilerplate.
pub const BOILERPLATE_ONLY: &str = "boilerplate_only";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentenceFingerprint {
    pub prefix_hash: u64,
    pub suffix_hash: u64,
    pub len_bucket: u32,
}

impl SentenceFingerprint {
    /// Collapse into a single 64-bit key for counting.
    pub fn key(&self) -> u64 {
        hash_u64(
            self.prefix_hash ^ self.suffix_hash.rotate_left(17),
            self.len_bucket as u64,
        )
    }
}

pub fn sentence_fingerprint(sentence: &str, k: usize) -> SentenceFingerprint {
    let k = k.max(1);
    let sentence = sentence.trim();
    let offsets: Vec<usize> = sentence.char_indices().map(|(i, _)| i).collect();
    let len = offsets.len();
    let (prefix, suffix) = if len < 2 * k {
        (sentence, sentence)
    } else {
        (&sentence[..offsets[k]], &sentence[offsets[len - k]..])
    };
    SentenceFingerprint {
        prefix_hash: hash_str(prefix, 0),
        suffix_hash: hash_str(suffix, 0),
        len_bucket: (len / 16) as u32,
    }
}

fn is_ascii_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_wide_terminal(c: char) -> bool {
    matches!(c, '。' | '！' | '？')
}

/// A sentence inside a line: its byte span and the whitespace that follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SentenceSpan {
    pub start: usize,
    pub end: usize,
    pub gap_end: usize,
}

/// Split one line into sentences. A sentence ends after `.`, `!` or `?`
/// followed by whitespace or the end of the line, or after a fullwidth
/// terminal mark, and always at the end of the line.
pub fn sentence_spans(line: &str) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    let mut chars = line.char_indices().peekable();
    let mut start: Option<usize> = None;
    while let Some((i, c)) = chars.next() {
        if start.is_none() {
            if c.is_whitespace() {
                continue;
            }
            start = Some(i);
        }
        let next = chars.peek().map(|&(_, n)| n);
        let ends = is_wide_terminal(c) || (is_ascii_terminal(c) && next.is_none_or(char::is_whitespace));
        if ends {
            let end = i + c.len_utf8();
            let mut gap_end = end;
            while let Some(&(j, n)) = chars.peek() {
                if !n.is_whitespace() {
                    break;
                }
                gap_end = j + n.len_utf8();
                chars.next();
            }
            spans.push(SentenceSpan {
                start: start.take().unwrap(),
                end,
                gap_end,
            });
        }
    }
    if let Some(s) = start {
        let end = line.trim_end().len();
        spans.push(SentenceSpan {
            start: s,
            end,
            gap_end: line.len(),
        });
    }
    spans
}

/// All sentences of a text, line by line.
pub fn sentences(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n')
        .flat_map(|line| sentence_spans(line).into_iter().map(move |s| &line[s.start..s.end]))
}

/// Distinct fingerprint keys of the sentences in `text`.
pub fn fingerprint_keys(text: &str, k: usize) -> Vec<u64> {
    let mut keys: Vec<u64> = sentences(text).map(|s| sentence_fingerprint(s, k).key()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys
}

/// Remove every sentence for which `is_boilerplate` holds. Untouched lines
/// and paragraph breaks are kept byte for byte; a line that loses all its
/// sentences disappears, as does a paragraph that loses all its lines.
/// Returns the new text and the number of sentences removed.
pub fn remove_sentences(text: &str, is_boilerplate: impl Fn(&str) -> bool) -> (String, usize) {
    let mut removed = 0;
    let mut paragraphs = Vec::new();
    for para in text.split("\n\n") {
        let mut lines = Vec::new();
        let mut had_content = false;
        for line in para.split('\n') {
            let spans = sentence_spans(line);
            had_content |= !spans.is_empty();
            let drop: Vec<bool> = spans.iter().map(|s| is_boilerplate(&line[s.start..s.end])).collect();
            let n = drop.iter().filter(|d| **d).count();
            if n == 0 {
                lines.push(line.to_string());
                continue;
            }
            removed += n;
            let mut rebuilt = line[..spans[0].start].to_string();
            for (s, _) in spans.iter().zip(&drop).filter(|(_, d)| !**d) {
                rebuilt.push_str(&line[s.start..s.gap_end]);
            }
            let rebuilt = rebuilt.trim_end();
            if !rebuilt.trim().is_empty() {
                lines.push(rebuilt.to_string());
            }
        }
        if lines.is_empty() && had_content {
            continue;
        }
        paragraphs.push(lines.join("\n"));
    }
    if removed == 0 {
        return (text.to_string(), 0);
    }
    (paragraphs.join("\n\n"), removed)
}

/// Count, for each fingerprint, how many documents contain it.
pub fn count_fingerprints<'a>(texts: impl IntoIterator<Item = &'a str>, k: usize) -> HashMap<u64, usize> {
    let mut counts = HashMap::new();
    for t in texts {
        for key in fingerprint_keys(t, k) {
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    counts
}

/// Strip sentences whose fingerprint occurs in at least `min_repeat`
/// documents. Documents left with no content are emitted empty and carry the
/// `boilerplate_only` meta flag.
pub fn strip_boilerplate_sentences(docs: &[Document], min_repeat: usize, k: usize) -> (Vec<Document>, StageStats) {
    let counts = count_fingerprints(docs.iter().map(|d| d.content.as_str()), k);
    let boilerplate: HashSet<u64> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_repeat.max(2))
        .map(|(key, _)| key)
        .collect();
    let mut stats = StageStats::new("sentence_dedup");
    let out = docs
        .iter()
        .map(|d| {
            stats.record_in(d.byte_len());
            let mut doc = d.clone();
            let (text, removed) =
                remove_sentences(&d.content, |s| boilerplate.contains(&sentence_fingerprint(s, k).key()));
            if removed > 0 {
                doc.content = text;
                if doc.content.trim().is_empty() {
                    doc.content.clear();
                    doc.meta.insert(BOILERPLATE_ONLY.to_string(), "true".to_string());
                }
            }
            stats.record_out(doc.byte_len());
            doc
        })
        .collect();
    (out, stats)
}
