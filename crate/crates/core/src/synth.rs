//! Synthetic corpora with a known answer key, for end-to-end checks of the
//! pipeline.
//!
//! The planted corpus holds clean control documents plus documents that each
//! stage should remove: URL duplicates, simHash near-duplicates, documents
//! carrying a near-copy of another document's paragraph, a boilerplate
//! sentence shared by many documents, and lexicon-toxic documents.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::dedup::{cosine_similarity, hamming_distance, simhash, ParagraphVector};

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "ch", "br", "st", "tr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

pub const BOILERPLATE_SENTENCE: &str = "All rights reserved by the original publisher of this archive.";

/// How many documents of each kind to plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantSpec {
    pub total: usize,
    pub url_duplicates: usize,
    pub near_duplicates: usize,
    pub paragraph_duplicates: usize,
    pub boilerplate_docs: usize,
    pub toxic: usize,
}

impl Default for PlantSpec {
    fn default() -> Self {
        Self {
            total: 1000,
            url_duplicates: 100,
            near_duplicates: 100,
            paragraph_duplicates: 50,
            boilerplate_docs: 120,
            toxic: 50,
        }
    }
}

/// What a correct pipeline run must do with the planted corpus.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AnswerKey {
    pub controls: Vec<String>,
    pub url_duplicates: Vec<String>,
    pub near_duplicates: Vec<String>,
    /// (document id, planted paragraph text).
    pub paragraph_duplicates: Vec<(String, String)>,
    pub boilerplate_docs: Vec<String>,
    pub toxic: Vec<String>,
    pub boilerplate_sentence: String,
}

impl AnswerKey {
    /// Documents that should survive every stage.
    pub fn expected_survivors(&self) -> usize {
        self.controls.len() + self.paragraph_duplicates.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub docs: Vec<Document>,
    pub key: AnswerKey,
}

struct Words {
    rng: ChaCha8Rng,
}

impl Words {
    fn word(&mut self) -> String {
        let syllables = self.rng.gen_range(2..=3);
        (0..syllables)
            .map(|_| {
                let o = ONSETS.choose(&mut self.rng).unwrap();
                let v = VOWELS.choose(&mut self.rng).unwrap();
                format!("{o}{v}")
            })
            .collect()
    }

    fn sentence(&mut self) -> String {
        let n = self.rng.gen_range(8..=16);
        let mut words: Vec<String> = (0..n).map(|_| self.word()).collect();
        let first = &mut words[0];
        *first = first[..1].to_uppercase() + &first[1..];
        words.join(" ") + "."
    }

    fn paragraph(&mut self) -> String {
        let n = self.rng.gen_range(3..=5);
        (0..n).map(|_| self.sentence()).collect::<Vec<_>>().join(" ")
    }

    fn document(&mut self) -> Vec<String> {
        let n = self.rng.gen_range(2..=4);
        (0..n).map(|_| self.paragraph()).collect()
    }
}

fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_alphabetic(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

/// Replace one word of `text`, retrying until `accept` holds.
fn edit_one_word(words: &mut Words, text: &str, accept: impl Fn(&str) -> bool) -> String {
    let spans = word_spans(text);
    for _ in 0..1000 {
        let (s, e) = spans[words.rng.gen_range(0..spans.len())];
        let replacement = words.word();
        if replacement == text[s..e] {
            continue;
        }
        let candidate = format!("{}{}{}", &text[..s], replacement, &text[e..]);
        if accept(&candidate) {
            return candidate;
        }
    }
    panic!("could not find an acceptable single-word edit");
}

fn url_variant(rng: &mut ChaCha8Rng, i: usize) -> (String, String) {
    let host = format!("site{}.example.org", i % 37);
    let path = format!("/articles/{i}");
    let canonical = format!("https://{host}{path}?page=1&ref=feed");
    let variant = match rng.gen_range(0..3) {
        0 => format!("HTTPS://{}{path}?ref=feed&page=1#comments", host.to_uppercase()),
        1 => format!("https://{host}:443{path}?ref=feed&page=1"),
        _ => format!("https://{host}{path}?page=1&ref=feed#top"),
    };
    (canonical, variant)
}

/// Toxic filler built from the bundled lexicon terms.
const TOXIC_TERMS: &[&str] = &[
    "counterfeit passport",
    "buy stolen credit cards",
    "fake id for sale",
    "i will kill you",
];

/// Generate the planted corpus. Document ids sort so that every original
/// comes before its planted copy.
pub fn planted_corpus(spec: &PlantSpec, seed: u64) -> PlantedCorpus {
    let planted = spec.url_duplicates + spec.near_duplicates + spec.paragraph_duplicates + spec.toxic;
    assert!(spec.total >= planted, "total too small for the planted documents");
    let n_controls = spec.total - planted;
    assert!(
        spec.boilerplate_docs <= n_controls,
        "not enough controls for the boilerplate documents"
    );
    let mut words = Words {
        rng: ChaCha8Rng::seed_from_u64(seed),
    };
    let mut key = AnswerKey {
        boilerplate_sentence: BOILERPLATE_SENTENCE.to_string(),
        ..AnswerKey::default()
    };
    let mut docs = Vec::with_capacity(spec.total);

    let mut controls: Vec<(Document, Vec<String>)> = Vec::with_capacity(n_controls);
    for i in 0..n_controls {
        let paragraphs = words.document();
        let (canonical, _) = url_variant(&mut words.rng, i);
        let doc = Document::new(format!("doc-c-{i:05}"), "web", paragraphs.join("\n\n")).with_url(canonical);
        key.controls.push(doc.id.clone());
        controls.push((doc, paragraphs));
    }
    let mut order: Vec<usize> = (0..n_controls).collect();
    order.shuffle(&mut words.rng);
    for &i in order.iter().take(spec.boilerplate_docs) {
        let doc = &mut controls[i].0;
        doc.content.push_str("\n\n");
        doc.content.push_str(BOILERPLATE_SENTENCE);
        key.boilerplate_docs.push(doc.id.clone());
    }
    key.boilerplate_docs.sort();

    for k in 0..spec.url_duplicates {
        let i = words.rng.gen_range(0..n_controls);
        let (_, variant) = url_variant(&mut words.rng, i);
        let doc = Document::new(format!("doc-u-{k:05}"), "news", words.document().join("\n\n")).with_url(variant);
        key.url_duplicates.push(doc.id.clone());
        docs.push(doc);
    }

    for k in 0..spec.near_duplicates {
        let original = &controls[words.rng.gen_range(0..n_controls)].0;
        let sig = simhash(&original.content);
        let content = edit_one_word(&mut words, &original.content, |c| {
            hamming_distance(sig, simhash(c)) <= 3
        });
        let doc = Document::new(format!("doc-n-{k:05}"), "web", content);
        key.near_duplicates.push(doc.id.clone());
        docs.push(doc);
    }

    for k in 0..spec.paragraph_duplicates {
        let (original, paragraphs) = &controls[words.rng.gen_range(0..n_controls)];
        let source = paragraphs.choose(&mut words.rng).unwrap().clone();
        let base = ParagraphVector::from_text(&source);
        let copy = edit_one_word(&mut words, &source, |c| {
            cosine_similarity(&base, &ParagraphVector::from_text(c)).is_ok_and(|s| s >= 0.95)
        });
        let mut own = words.document();
        own.insert(1.min(own.len()), copy.clone());
        let content = own.join("\n\n");
        let doc = Document::new(format!("doc-p-{k:05}"), "web", content);
        debug_assert!(hamming_distance(simhash(&doc.content), simhash(&original.content)) > 3);
        key.paragraph_duplicates.push((doc.id.clone(), copy));
        docs.push(doc);
    }

    for k in 0..spec.toxic {
        let mut paragraphs = words.document();
        for p in paragraphs.iter_mut() {
            let term = TOXIC_TERMS.choose(&mut words.rng).unwrap();
            let (a, b) = (words.word(), words.word());
            p.push_str(&format!(" Then {a} {term} {b} again."));
        }
        let doc = Document::new(format!("doc-t-{k:05}"), "social", paragraphs.join("\n\n"));
        key.toxic.push(doc.id.clone());
        docs.push(doc);
    }

    docs.extend(controls.into_iter().map(|(d, _)| d));
    docs.shuffle(&mut words.rng);
    PlantedCorpus { docs, key }
}
