//! Byte-level pre-tokenization.

/// ASCII whitespace bytes. Other Unicode spaces stay inside words.
#[inline]
pub fn is_space_byte(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Length in bytes of the digit starting at `i`: 1 for ASCII `0`-`9`, 3 for
/// fullwidth `０`-`９`.
#[inline]
pub fn digit_len(bytes: &[u8], i: usize) -> Option<usize> {
    match bytes[i] {
        b'0'..=b'9' => Some(1),
        0xEF if bytes.len() > i + 2 && bytes[i + 1] == 0xBC && (0x90..=0x99).contains(&bytes[i + 2]) => Some(3),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece<'a> {
    Digit(&'a [u8]),
    Word(&'a [u8]),
}

impl<'a> Piece<'a> {
    pub fn bytes(&self) -> &'a [u8] {
        match *self {
            Piece::Digit(b) | Piece::Word(b) => b,
        }
    }
}

/// Split raw bytes into pre-tokens: a run of whitespace glued to the word
/// that follows it, and, with `digit_split`, every digit on its own.
pub fn pre_tokenize(bytes: &[u8], digit_split: bool) -> Vec<Piece<'_>> {
    let digit_at = |i: usize| if digit_split { digit_len(bytes, i) } else { None };
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if let Some(n) = digit_at(i) {
            out.push(Piece::Digit(&bytes[i..i + n]));
            i += n;
            continue;
        }
        let start = i;
        while i < bytes.len() && is_space_byte(bytes[i]) {
            i += 1;
        }
        while i < bytes.len() && !is_space_byte(bytes[i]) && digit_at(i).is_none() {
            i += 1;
        }
        out.push(Piece::Word(&bytes[start..i]));
    }
    out
}
