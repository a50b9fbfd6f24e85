//! Deterministic seed derivation.
//!
//! Every random stream in the crate is keyed by `(base seed, purpose tag)`
//! so that independent subsystems (channel ensemble, training noise, test
//! set) never share a stream and results are reproducible byte-for-byte
//! across runs and thread counts.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// FNV-1a over a byte string.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// SplitMix64 finalizer; decorrelates nearby seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from a base seed and a purpose tag.
pub fn derive_seed(base: u64, tag: &str) -> u64 {
    splitmix64(base ^ fnv1a64(tag.as_bytes()))
}

/// Seeded RNG for a `(base, tag)` stream.
pub fn stream_rng(base: u64, tag: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(base, tag))
}
