//! Byte-level BPE: training, encoding, decoding and compression evaluation.
//!
//! Id layout: the 256 byte tokens, then special tokens, then (with digit
//! splitting) one token per fullwidth digit, then learned merges, and finally
//! the reserved slots at the top of the range.

pub mod eval;
pub mod pretok;
pub mod train;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::path::Path;

use base64::Engine;
use serde::{Deserialize, Serialize};

pub use eval::{compression_ratio, CompressionReport, LangRatio};
use pretok::{pre_tokenize, Piece};
pub use train::{train_bpe, TrainParams};

pub const MODEL_VERSION: u32 = 1;
/// Vocabulary sizes must be multiples of this.
pub const VOCAB_MULTIPLE: usize = 128;
pub const DEFAULT_RESERVED: usize = 200;
pub const BYTE_TOKENS: usize = 256;

/// The fullwidth digits `０`-`９` as UTF-8.
pub fn fullwidth_digits() -> impl Iterator<Item = Vec<u8>> {
    ('０'..='９').map(|c| c.to_string().into_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TokenizerError {
    #[error("vocab size {0} is not divisible by {VOCAB_MULTIPLE}")]
    NotDivisible(usize),
    #[error("vocab size {size} is too small: need more than {needed} fixed ids")]
    TooSmall { size: usize, needed: usize },
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("token id {0} is reserved")]
    ReservedId(u32),
    #[error("token id {0} is out of range")]
    OutOfRange(u32),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("{0}")]
    Io(String),
    #[error("empty text in evaluation set (item {0})")]
    EmptyText(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    /// Byte sequence per id; `None` marks a reserved slot.
    vocab: Vec<Option<Vec<u8>>>,
    merges: Vec<(u32, u32)>,
    special: BTreeMap<String, u32>,
    digit_split: bool,
    ranks: HashMap<(u32, u32), (u32, u32)>,
    digits: HashMap<Vec<u8>, u32>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    vocab: BTreeMap<u32, String>,
    merges: Vec<(u32, u32)>,
    reserved: Vec<u32>,
    special: BTreeMap<String, u32>,
    digit_split: bool,
}

impl TokenizerModel {
    /// A model with no merges. Every unfilled id is reserved.
    pub fn untrained(vocab_size: usize, specials: &[String], digit_split: bool) -> Result<Self, TokenizerError> {
        let (base, special) = base_vocab(specials, digit_split)?;
        check_size(vocab_size, base.len())?;
        let mut vocab: Vec<Option<Vec<u8>>> = base.into_iter().map(Some).collect();
        vocab.resize(vocab_size, None);
        Self::assemble(vocab, Vec::new(), special, digit_split)
    }

    /// One token per byte, nothing else: the reference point for compression.
    pub fn byte_baseline() -> Self {
        let vocab = (0..=255u8).map(|b| Some(vec![b])).collect();
        Self::assemble(vocab, Vec::new(), BTreeMap::new(), false).expect("byte vocabulary is valid")
    }

    fn assemble(
        vocab: Vec<Option<Vec<u8>>>,
        merges: Vec<(u32, u32)>,
        special: BTreeMap<String, u32>,
        digit_split: bool,
    ) -> Result<Self, TokenizerError> {
        let invalid = |m: String| Err(TokenizerError::Invalid(m));
        if !vocab.len().is_multiple_of(VOCAB_MULTIPLE) {
            return Err(TokenizerError::NotDivisible(vocab.len()));
        }
        for b in 0..BYTE_TOKENS {
            if vocab.get(b).cloned().flatten() != Some(vec![b as u8]) {
                return invalid(format!("id {b} must be the single byte {b:#04x}"));
            }
        }
        let special_ids: std::collections::HashSet<u32> = special.values().copied().collect();
        for (name, &id) in &special {
            match vocab.get(id as usize) {
                Some(Some(bytes)) if bytes == name.as_bytes() && id as usize >= BYTE_TOKENS => {}
                _ => return invalid(format!("special {name:?} does not match id {id}")),
            }
        }
        // Lookup by bytes over everything except specials.
        let mut by_bytes: HashMap<&[u8], u32> = HashMap::new();
        for (id, bytes) in vocab.iter().enumerate() {
            if let Some(b) = bytes {
                if !special_ids.contains(&(id as u32)) {
                    by_bytes.entry(b.as_slice()).or_insert(id as u32);
                }
            }
        }
        let mut digits = HashMap::new();
        if digit_split {
            for d in fullwidth_digits() {
                match by_bytes.get(d.as_slice()) {
                    Some(&id) => {
                        digits.insert(d, id);
                    }
                    None => return invalid("digit splitting needs the fullwidth digit tokens".into()),
                }
            }
        }
        let mut ranks = HashMap::with_capacity(merges.len());
        for (rank, &(l, r)) in merges.iter().enumerate() {
            let part = |id: u32| match vocab.get(id as usize) {
                Some(Some(b)) if !special_ids.contains(&id) => Ok(b.clone()),
                _ => Err(TokenizerError::Invalid(format!(
                    "merge {rank} refers to unusable id {id}"
                ))),
            };
            let mut joined = part(l)?;
            joined.extend(part(r)?);
            let Some(&result) = by_bytes.get(joined.as_slice()) else {
                return invalid(format!("merge {rank} result is not in the vocabulary"));
            };
            if ranks.insert((l, r), (rank as u32, result)).is_some() {
                return invalid(format!("merge {rank} repeats an earlier pair"));
            }
        }
        Ok(Self {
            vocab,
            merges,
            special,
            digit_split,
            ranks,
            digits,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn reserved(&self) -> Vec<u32> {
        self.vocab
            .iter()
            .enumerate()
            .filter(|(_, b)| b.is_none())
            .map(|(i, _)| i as u32)
            .collect()
    }

    pub fn special(&self) -> &BTreeMap<String, u32> {
        &self.special
    }

    pub fn digit_split(&self) -> bool {
        self.digit_split
    }

    /// Bytes of token `id`, or `None` for a reserved or unknown id.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        self.vocab.get(id as usize).and_then(|b| b.as_deref())
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.encode_bytes(text.as_bytes())
    }

    /// Encode arbitrary bytes; invalid UTF-8 falls back to byte tokens.
    pub fn encode_bytes(&self, bytes: &[u8]) -> Vec<u32> {
        let mut out = Vec::with_capacity(bytes.len() / 2);
        for piece in pre_tokenize(bytes, self.digit_split) {
            match piece {
                Piece::Digit(d) if d.len() == 1 => out.push(d[0] as u32),
                Piece::Digit(d) => out.push(self.digits[d]),
                Piece::Word(w) => self.encode_word(w, &mut out),
            }
        }
        out
    }

    /// Apply merges in learned order: repeatedly merge the adjacent pair with
    /// the lowest rank. Uses a linked list and a heap of candidate pairs.
    fn encode_word(&self, word: &[u8], out: &mut Vec<u32>) {
        if self.merges.is_empty() || word.len() < 2 {
            out.extend(word.iter().map(|&b| b as u32));
            return;
        }
        let n = word.len();
        let mut ids: Vec<u32> = word.iter().map(|&b| b as u32).collect();
        let mut next: Vec<usize> = (1..=n).collect();
        let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
        let mut alive = vec![true; n];
        let mut heap: BinaryHeap<Reverse<(u32, usize, u32, u32)>> = BinaryHeap::new();
        let push = |heap: &mut BinaryHeap<_>, i: usize, ids: &[u32], next: &[usize]| {
            if let Some(&j) = next.get(i) {
                if j < n {
                    if let Some(&(rank, _)) = self.ranks.get(&(ids[i], ids[j])) {
                        heap.push(Reverse((rank, i, ids[i], ids[j])));
                    }
                }
            }
        };
        for i in 0..n - 1 {
            push(&mut heap, i, &ids, &next);
        }
        while let Some(Reverse((rank, i, l, r))) = heap.pop() {
            if !alive[i] || ids[i] != l {
                continue;
            }
            let j = next[i];
            if j >= n || ids[j] != r {
                continue;
            }
            let (cur_rank, result) = self.ranks[&(l, r)];
            debug_assert_eq!(cur_rank, rank);
            ids[i] = result;
            alive[j] = false;
            next[i] = next[j];
            if next[i] < n {
                prev[next[i]] = i;
            }
            if prev[i] < n {
                push(&mut heap, prev[i], &ids, &next);
            }
            push(&mut heap, i, &ids, &next);
        }
        let mut i = 0;
        while i < n {
            out.push(ids[i]);
            i = next[i];
        }
    }

    pub fn decode(&self, ids: &[u32]) -> Result<Vec<u8>, TokenizerError> {
        let mut out = Vec::new();
        for &id in ids {
            match self.vocab.get(id as usize) {
                Some(Some(b)) => out.extend_from_slice(b),
                Some(None) => return Err(TokenizerError::ReservedId(id)),
                None => return Err(TokenizerError::OutOfRange(id)),
            }
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        let b64 = base64::engine::general_purpose::STANDARD;
        let file = ModelFile {
            version: MODEL_VERSION,
            vocab: self
                .vocab
                .iter()
                .enumerate()
                .filter_map(|(i, b)| b.as_ref().map(|b| (i as u32, b64.encode(b))))
                .collect(),
            merges: self.merges.clone(),
            reserved: self.reserved(),
            special: self.special.clone(),
            digit_split: self.digit_split,
        };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TokenizerError> {
        let invalid = |m: String| TokenizerError::Invalid(m);
        let file: ModelFile = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if file.version != MODEL_VERSION {
            return Err(invalid(format!("unsupported version {}", file.version)));
        }
        let size = file.vocab.len() + file.reserved.len();
        let mut vocab: Vec<Option<Vec<u8>>> = vec![None; size];
        let b64 = base64::engine::general_purpose::STANDARD;
        for (id, enc) in &file.vocab {
            let slot = vocab
                .get_mut(*id as usize)
                .ok_or_else(|| invalid(format!("vocab id {id} outside 0..{size}")))?;
            *slot = Some(b64.decode(enc).map_err(|e| invalid(format!("id {id}: {e}")))?);
        }
        let mut reserved = file.reserved.clone();
        reserved.sort_unstable();
        reserved.dedup();
        if reserved.len() != file.reserved.len()
            || reserved
                .iter()
                .any(|&r| r as usize >= size || vocab[r as usize].is_some())
        {
            return Err(invalid("reserved ids overlap the vocabulary or each other".into()));
        }
        Self::assemble(vocab, file.merges, file.special, file.digit_split)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_json()).map_err(|e| TokenizerError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = std::fs::read_to_string(path).map_err(|e| TokenizerError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

/// Byte tokens, specials and (with digit splitting) fullwidth digits.
/// Byte tokens, specials and digit tokens, plus the special-name lookup.
type BaseVocab = (Vec<Vec<u8>>, BTreeMap<String, u32>);

fn base_vocab(specials: &[String], digit_split: bool) -> Result<BaseVocab, TokenizerError> {
    let mut vocab: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut special = BTreeMap::new();
    for name in specials {
        if name.is_empty() || special.insert(name.clone(), vocab.len() as u32).is_some() {
            return Err(TokenizerError::Invalid(format!(
                "special token {name:?} is empty or listed twice"
            )));
        }
        vocab.push(name.as_bytes().to_vec());
    }
    if digit_split {
        vocab.extend(fullwidth_digits());
    }
    Ok((vocab, special))
}

fn check_size(vocab_size: usize, fixed: usize) -> Result<(), TokenizerError> {
    if !vocab_size.is_multiple_of(VOCAB_MULTIPLE) {
        return Err(TokenizerError::NotDivisible(vocab_size));
    }
    if vocab_size <= fixed {
        return Err(TokenizerError::TooSmall {
            size: vocab_size,
            needed: fixed,
        });
    }
    Ok(())
}
