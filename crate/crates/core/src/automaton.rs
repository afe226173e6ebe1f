//! Aho-Corasick multi-pattern automaton over Unicode scalar values.
//!
//! Matching works on code points, so CJK terms match anywhere without word
//! segmentation. Patterns can individually require word boundaries, which is
//! how alphabetic-script terms avoid firing inside longer words. Input can be
//! fed in chunks; state carries over between chunks.

use std::collections::VecDeque;

use crate::text::{fold_char, is_cjk};

const ROOT: u32 = 0;

/// One occurrence of a pattern. Offsets are byte offsets into the scanned
/// text (or into the concatenation of all chunks fed to a [`Stream`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RawMatch {
    pub start: usize,
    pub end: usize,
    pub pattern: usize,
}

#[derive(Debug, Clone, Default)]
struct State {
    goto: Vec<(char, u32)>,
    fail: u32,
    out: Vec<u32>,
}

impl State {
    fn child(&self, c: char) -> Option<u32> {
        self.goto
            .binary_search_by_key(&c, |&(k, _)| k)
            .ok()
            .map(|i| self.goto[i].1)
    }
}

#[derive(Debug, Clone)]
pub struct Automaton {
    states: Vec<State>,
    pattern_chars: Vec<usize>,
    boundary: Vec<bool>,
    fold_case: bool,
    max_chars: usize,
}

/// A character that continues a word in a space-delimited script.
#[inline]
pub fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() && !is_cjk(c)
}

/// Whether a term should only match on word boundaries: its first and last
/// characters belong to a space-delimited script.
pub fn wants_boundary(term: &str) -> bool {
    match (term.chars().next(), term.chars().last()) {
        (Some(a), Some(b)) => is_word_char(a) && is_word_char(b),
        _ => false,
    }
}

impl Automaton {
    /// Build from `(pattern, needs_word_boundary)` pairs. Empty patterns
    /// never match.
    pub fn new<S: AsRef<str>>(patterns: &[(S, bool)], fold_case: bool) -> Self {
        let mut states = vec![State::default()];
        let mut pattern_chars = Vec::with_capacity(patterns.len());
        let mut boundary = Vec::with_capacity(patterns.len());
        for (pid, (pattern, needs_boundary)) in patterns.iter().enumerate() {
            let chars: Vec<char> = pattern
                .as_ref()
                .chars()
                .map(|c| if fold_case { fold_char(c) } else { c })
                .collect();
            pattern_chars.push(chars.len());
            boundary.push(*needs_boundary);
            if chars.is_empty() {
                continue;
            }
            let mut s = ROOT;
            for c in chars {
                s = match states[s as usize].child(c) {
                    Some(next) => next,
                    None => {
                        let next = states.len() as u32;
                        states.push(State::default());
                        let goto = &mut states[s as usize].goto;
                        let pos = goto.partition_point(|&(k, _)| k < c);
                        goto.insert(pos, (c, next));
                        next
                    }
                };
            }
            states[s as usize].out.push(pid as u32);
        }

        // Breadth-first failure links; outputs inherit along the fail chain.
        let mut queue = VecDeque::new();
        let root_children: Vec<u32> = states[ROOT as usize].goto.iter().map(|&(_, s)| s).collect();
        for child in root_children {
            states[child as usize].fail = ROOT;
            queue.push_back(child);
        }
        while let Some(s) = queue.pop_front() {
            let edges = states[s as usize].goto.clone();
            for (c, child) in edges {
                let mut f = states[s as usize].fail;
                let target = loop {
                    if let Some(t) = states[f as usize].child(c) {
                        break t;
                    }
                    if f == ROOT {
                        break ROOT;
                    }
                    f = states[f as usize].fail;
                };
                states[child as usize].fail = target;
                let inherited = states[target as usize].out.clone();
                states[child as usize].out.extend(inherited);
                queue.push_back(child);
            }
        }

        let max_chars = pattern_chars.iter().copied().max().unwrap_or(0);
        Self {
            states,
            pattern_chars,
            boundary,
            fold_case,
            max_chars,
        }
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_chars.len()
    }

    #[inline]
    fn next(&self, mut s: u32, c: char) -> u32 {
        loop {
            if let Some(t) = self.states[s as usize].child(c) {
                return t;
            }
            if s == ROOT {
                return ROOT;
            }
            s = self.states[s as usize].fail;
        }
    }

    /// All matches, overlapping ones included, sorted by start offset.
    pub fn find_all(&self, text: &str) -> Vec<RawMatch> {
        let mut stream = self.stream();
        let mut out = stream.feed(text);
        out.extend(stream.finish());
        out.sort_unstable();
        out
    }

    /// True if any pattern occurs in `text`.
    pub fn is_match(&self, text: &str) -> bool {
        !self.find_all(text).is_empty()
    }

    pub fn stream(&self) -> Stream<'_> {
        Stream {
            ac: self,
            state: ROOT,
            offset: 0,
            window: VecDeque::with_capacity(self.max_chars + 1),
            pending: Vec::new(),
        }
    }
}

/// Incremental scanner. Matches that need a right-hand word boundary are held
/// back until the next character (or [`Stream::finish`]) decides them.
#[derive(Debug, Clone)]
pub struct Stream<'a> {
    ac: &'a Automaton,
    state: u32,
    offset: usize,
    window: VecDeque<(usize, char)>,
    pending: Vec<RawMatch>,
}

impl Stream<'_> {
    pub fn feed(&mut self, chunk: &str) -> Vec<RawMatch> {
        let ac = self.ac;
        let mut out = Vec::new();
        for (i, c) in chunk.char_indices() {
            let at = self.offset + i;
            if !self.pending.is_empty() {
                if is_word_char(c) {
                    self.pending.clear();
                } else {
                    out.append(&mut self.pending);
                }
            }
            self.window.push_back((at, c));
            if self.window.len() > ac.max_chars + 1 {
                self.window.pop_front();
            }
            let folded = if ac.fold_case { fold_char(c) } else { c };
            self.state = ac.next(self.state, folded);
            let end = at + c.len_utf8();
            for &pid in &ac.states[self.state as usize].out {
                let pid = pid as usize;
                let len = ac.pattern_chars[pid];
                let first = self.window.len() - len;
                let m = RawMatch {
                    start: self.window[first].0,
                    end,
                    pattern: pid,
                };
                if !ac.boundary[pid] {
                    out.push(m);
                    continue;
                }
                if first > 0 && is_word_char(self.window[first - 1].1) {
                    continue;
                }
                self.pending.push(m);
            }
        }
        self.offset += chunk.len();
        out
    }

    /// Flush matches waiting on a right boundary; end of input counts as one.
    pub fn finish(mut self) -> Vec<RawMatch> {
        std::mem::take(&mut self.pending)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn build(patterns: &[&str], boundary: bool) -> Automaton {
        let p: Vec<(&str, bool)> = patterns.iter().map(|p| (*p, boundary && wants_boundary(p))).collect();
        Automaton::new(&p, false)
    }

    fn naive(patterns: &[&str], text: &str) -> Vec<RawMatch> {
        let mut out = Vec::new();
        for (pid, p) in patterns.iter().enumerate() {
            if p.is_empty() {
                continue;
            }
            for (start, _) in text.char_indices() {
                if text[start..].starts_with(p) {
                    out.push(RawMatch {
                        start,
                        end: start + p.len(),
                        pattern: pid,
                    });
                }
            }
        }
        out.sort_unstable();
        out
    }

    #[test]
    fn single_pattern() {
        let ac = build(&["bad"], false);
        assert_eq!(
            ac.find_all("abadc"),
            vec![RawMatch {
                start: 1,
                end: 4,
                pattern: 0
            }]
        );
    }

    #[test]
    fn overlapping_classic() {
        let ac = build(&["he", "she", "his"], false);
        let got = ac.find_all("ushers");
        assert_eq!(
            got,
            vec![
                RawMatch {
                    start: 1,
                    end: 4,
                    pattern: 1
                },
                RawMatch {
                    start: 2,
                    end: 4,
                    pattern: 0
                }
            ]
        );
    }

    #[test]
    fn boundary_gating() {
        let ac = build(&["ass"], true);
        assert!(ac.find_all("class").is_empty());
        assert_eq!(ac.find_all("an ass here").len(), 1);
        assert_eq!(ac.find_all("ass").len(), 1);
        assert!(ac.find_all("assume").is_empty());
    }

    #[test]
    fn cjk_matches_without_boundaries() {
        let ac = build(&["赌博"], true);
        assert_eq!(ac.find_all("网上赌博平台").len(), 1);
    }

    #[test]
    fn case_folding_keeps_original_offsets() {
        let ac = Automaton::new(&[("buy now", true)], true);
        let text = "Please BUY NOW!";
        let m = ac.find_all(text);
        assert_eq!(&text[m[0].start..m[0].end], "BUY NOW");
    }

    proptest! {
        #[test]
        fn agrees_with_naive_search(
            patterns in proptest::collection::vec("[ab中]{1,3}", 1..6),
            text in "[ab中 ]{0,40}",
        ) {
            let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
            prop_assert_eq!(build(&refs, false).find_all(&text), naive(&refs, &text));
        }

        #[test]
        fn chunked_scan_equals_whole_scan(
            patterns in proptest::collection::vec("[abc]{1,4}", 1..6),
            text in "[abc 中]{0,60}",
            cuts in proptest::collection::vec(0usize..60, 0..5),
        ) {
            let refs: Vec<&str> = patterns.iter().map(String::as_str).collect();
            let ac = build(&refs, true);
            let whole = ac.find_all(&text);
            let mut bounds: Vec<usize> = cuts.into_iter().filter(|&c| text.is_char_boundary(c.min(text.len()))).map(|c| c.min(text.len())).collect();
            bounds.push(0);
            bounds.push(text.len());
            bounds.sort_unstable();
            let mut stream = ac.stream();
            let mut got = Vec::new();
            for w in bounds.windows(2) {
                got.extend(stream.feed(&text[w[0]..w[1]]));
            }
            got.extend(stream.finish());
            got.sort_unstable();
            prop_assert_eq!(got, whole);
        }
    }
}
