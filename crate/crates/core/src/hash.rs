//! Stable 64-bit hashing.
//!
//! Everything that ends up in a file, a manifest or a dedup decision goes
//! through these helpers so results do not depend on the platform or on the
//! std hasher's unspecified algorithm.

use xxhash_rust::xxh3::xxh3_64_with_seed;

/// Hash a byte slice with a seed.
#[inline]
pub fn hash_bytes(bytes: &[u8], seed: u64) -> u64 {
    xxh3_64_with_seed(bytes, seed)
}

/// Hash a string with a seed.
#[inline]
pub fn hash_str(s: &str, seed: u64) -> u64 {
    xxh3_64_with_seed(s.as_bytes(), seed)
}

/// Hash a single integer with a seed.
#[inline]
pub fn hash_u64(value: u64, seed: u64) -> u64 {
    xxh3_64_with_seed(&value.to_le_bytes(), seed)
}

/// Render a hash as 16 lowercase hex digits.
pub fn hex64(value: u64) -> String {
    format!("{value:016x}")
}
