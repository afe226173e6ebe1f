//! BPE training with incremental pair counts and a lazy max-heap.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pretok::{pre_tokenize, Piece};
use super::{base_vocab, check_size, TokenizerError, TokenizerModel, DEFAULT_RESERVED};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct TrainParams {
    pub vocab_size: usize,
    pub reserved_slots: usize,
    pub specials: Vec<String>,
    pub digit_split: bool,
    /// Pairs seen fewer times than this are never merged; slots left over
    /// become reserved.
    pub min_frequency: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            vocab_size: 5120,
            reserved_slots: DEFAULT_RESERVED,
            specials: vec!["<|endoftext|>".to_string(), "<|pad|>".to_string()],
            digit_split: true,
            min_frequency: 2,
        }
    }
}

type Pair = (u32, u32);

fn count_words<I, S>(corpus: I, digit_split: bool) -> HashMap<Vec<u8>, u64>
where
    I: IntoIterator<Item = S>,
    I::IntoIter: Send,
    S: AsRef<[u8]> + Send,
{
    corpus
        .into_iter()
        .par_bridge()
        .fold(HashMap::new, |mut acc: HashMap<Vec<u8>, u64>, doc| {
            for piece in pre_tokenize(doc.as_ref(), digit_split) {
                match piece {
                    Piece::Word(w) => *acc.entry(w.to_vec()).or_default() += 1,
                    // Marks that the corpus had content even if it is all digits.
                    Piece::Digit(_) => *acc.entry(Vec::new()).or_default() += 1,
                }
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            if a.len() < b.len() {
                return merge_counts(b, a);
            }
            for (k, v) in b {
                *a.entry(k).or_default() += v;
            }
            a
        })
}

fn merge_counts(mut a: HashMap<Vec<u8>, u64>, b: HashMap<Vec<u8>, u64>) -> HashMap<Vec<u8>, u64> {
    for (k, v) in b {
        *a.entry(k).or_default() += v;
    }
    a
}

/// Learn merges greedily by pair frequency. Ties go to the merged token with
/// the smallest bytes. A pair whose merged bytes already exist as a token is
/// skipped so every byte sequence has one id.
pub fn train_bpe<I, S>(corpus: I, params: &TrainParams) -> Result<TokenizerModel, TokenizerError>
where
    I: IntoIterator<Item = S>,
    I::IntoIter: Send,
    S: AsRef<[u8]> + Send,
{
    let (mut vocab, special) = base_vocab(&params.specials, params.digit_split)?;
    check_size(params.vocab_size, vocab.len() + params.reserved_slots)?;
    let limit = params.vocab_size - params.reserved_slots;

    let counts = count_words(corpus, params.digit_split);
    if counts.is_empty() {
        return Err(TokenizerError::EmptyCorpus);
    }
    let mut entries: Vec<(Vec<u8>, u64)> = counts.into_iter().filter(|(w, _)| w.len() > 1).collect();
    entries.sort_unstable();
    let freqs: Vec<i64> = entries.iter().map(|(_, c)| *c as i64).collect();
    let mut words: Vec<Vec<u32>> = entries
        .into_iter()
        .map(|(w, _)| w.into_iter().map(u32::from).collect())
        .collect();

    let special_ids: HashSet<usize> = (super::BYTE_TOKENS..super::BYTE_TOKENS + params.specials.len()).collect();
    let mut known: HashSet<Vec<u8>> = vocab
        .iter()
        .enumerate()
        .filter(|(i, _)| !special_ids.contains(i))
        .map(|(_, b)| b.clone())
        .collect();

    let mut pair_counts: HashMap<Pair, i64> = HashMap::new();
    let mut where_: HashMap<Pair, Vec<usize>> = HashMap::new();
    for (wi, w) in words.iter().enumerate() {
        for p in w.windows(2) {
            let pair = (p[0], p[1]);
            *pair_counts.entry(pair).or_default() += freqs[wi];
            where_.entry(pair).or_default().push(wi);
        }
    }
    let joined = |vocab: &Vec<Vec<u8>>, (l, r): Pair| {
        let mut b = vocab[l as usize].clone();
        b.extend_from_slice(&vocab[r as usize]);
        b
    };
    let mut heap: BinaryHeap<(i64, Reverse<Vec<u8>>, Reverse<Pair>)> = pair_counts
        .iter()
        .map(|(&p, &c)| (c, Reverse(joined(&vocab, p)), Reverse(p)))
        .collect();

    let mut merges = Vec::new();
    let min = params.min_frequency.max(1) as i64;
    while vocab.len() < limit {
        let Some((count, Reverse(bytes), Reverse(pair))) = heap.pop() else {
            break;
        };
        if pair_counts.get(&pair) != Some(&count) {
            continue;
        }
        if count < min {
            break;
        }
        if known.contains(&bytes) {
            pair_counts.remove(&pair);
            continue;
        }
        let new_id = vocab.len() as u32;
        vocab.push(bytes.clone());
        known.insert(bytes);
        merges.push(pair);
        pair_counts.remove(&pair);

        let mut touched = where_.remove(&pair).unwrap_or_default();
        touched.sort_unstable();
        touched.dedup();
        let mut changed: BTreeSet<Pair> = BTreeSet::new();
        for wi in touched {
            let old = &words[wi];
            if !old.windows(2).any(|p| (p[0], p[1]) == pair) {
                continue;
            }
            let mut new = Vec::with_capacity(old.len());
            let mut i = 0;
            while i < old.len() {
                if i + 1 < old.len() && (old[i], old[i + 1]) == pair {
                    new.push(new_id);
                    i += 2;
                } else {
                    new.push(old[i]);
                    i += 1;
                }
            }
            let f = freqs[wi];
            for p in old.windows(2) {
                let key = (p[0], p[1]);
                if key != pair {
                    *pair_counts.entry(key).or_default() -= f;
                    changed.insert(key);
                }
            }
            for p in new.windows(2) {
                let key = (p[0], p[1]);
                *pair_counts.entry(key).or_default() += f;
                where_.entry(key).or_default().push(wi);
                changed.insert(key);
            }
            words[wi] = new;
        }
        for key in changed {
            match pair_counts.get(&key) {
                Some(&c) if c > 0 => heap.push((c, Reverse(joined(&vocab, key)), Reverse(key))),
                _ => {
                    pair_counts.remove(&key);
                }
            }
        }
    }

    let mut full: Vec<Option<Vec<u8>>> = vocab.into_iter().map(Some).collect();
    full.resize(params.vocab_size, None);
    TokenizerModel::assemble(full, merges, special, params.digit_split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(vocab_size: usize, reserved: usize) -> TrainParams {
        TrainParams {
            vocab_size,
            reserved_slots: reserved,
            specials: vec![],
            digit_split: true,
            min_frequency: 1,
        }
    }

    #[test]
    fn most_frequent_pair_first() {
        let m = train_bpe(["abab abab abab"], &params(384, 0)).unwrap();
        assert_eq!(m.merges()[0], (b'a' as u32, b'b' as u32));
        let ab = m.merges().len();
        assert!(ab >= 2);
    }

    #[test]
    fn ties_prefer_smaller_bytes() {
        // " a", "ab" and "xy" each occur twice; " a" has the smallest bytes.
        let m = train_bpe(["xy ab xy ab"], &params(384, 0)).unwrap();
        assert_eq!(m.merges()[0], (b' ' as u32, b'a' as u32));
        let m = train_bpe(["xy\nab\nxy\nab"], &params(384, 0)).unwrap();
        assert_eq!(m.merges()[0], (b'\n' as u32, b'a' as u32));
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(
            train_bpe(["a"], &params(81_921, 200)).unwrap_err(),
            TokenizerError::NotDivisible(81_921)
        );
        assert!(train_bpe(["abc abc"], &params(81_920, 200)).is_ok());
        assert!(matches!(
            train_bpe(["abc"], &params(384, 200)),
            Err(TokenizerError::TooSmall { .. })
        ));
        assert_eq!(
            train_bpe(Vec::<&str>::new(), &params(384, 0)).unwrap_err(),
            TokenizerError::EmptyCorpus
        );
        assert_eq!(
            train_bpe([""], &params(384, 0)).unwrap_err(),
            TokenizerError::EmptyCorpus
        );
    }

    #[test]
    fn reserved_slots_on_top_and_unused() {
        let m = train_bpe(["the cat sat on the mat with the hat"], &params(512, 200)).unwrap();
        let reserved = m.reserved();
        assert!(reserved.len() >= 200);
        assert!(reserved.iter().rev().take(200).all(|&r| r as usize >= 312));
        let ids = m.encode("the cat sat on the mat with the hat 123 １２");
        assert!(ids.iter().all(|id| !reserved.contains(id)));
    }

    #[test]
    fn merges_compress_and_roundtrip() {
        let text = "the quick brown fox jumps over the lazy dog. ".repeat(50);
        let m = train_bpe([text.as_str()], &params(512, 0)).unwrap();
        let ids = m.encode(&text);
        assert!(ids.len() < text.len() / 3);
        assert_eq!(m.decode(&ids).unwrap(), text.as_bytes());
    }

    #[test]
    fn deterministic_model_file() {
        let docs: Vec<String> = (0..200)
            .map(|i| format!("document {i} talks about item{} and 数据{}", i % 7, i % 5))
            .collect();
        let a = train_bpe(docs.iter(), &params(640, 10)).unwrap().to_json();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| train_bpe(docs.iter(), &params(640, 10)).unwrap().to_json());
        assert_eq!(a, b);
        assert_eq!(TokenizerModel::from_json(&a).unwrap().to_json(), a);
    }

    proptest! {
        #[test]
        fn roundtrip_and_digit_runs(bytes in proptest::collection::vec(any::<u8>(), 0..120), digits in "[0-9０-９]{1,12}") {
            let m = train_bpe(["hello world 12 ab ab ab ba \u{1F600}\u{1F600} 数据数据"], &params(384, 0)).unwrap();
            prop_assert_eq!(m.decode(&m.encode_bytes(&bytes)).unwrap(), bytes);
            let text = format!("x{digits}y");
            let ids = m.encode(&text);
            let runs: Vec<&u32> = ids.iter().filter(|&&id| {
                let b = m.token_bytes(id).unwrap();
                std::str::from_utf8(b).is_ok_and(|s| s.chars().all(|c| c.is_ascii_digit() || ('０'..='９').contains(&c)))
            }).collect();
            prop_assert_eq!(runs.len(), digits.chars().count());
        }
    }
}
