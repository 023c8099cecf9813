//! Deterministic random streams.
//!
//! Every stochastic stage draws from a ChaCha8 stream keyed by
//! `(master seed, stage label, index)`. Streams for different users or
//! sessions never share state, so work can be split across threads without
//! changing a single draw.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream for `index` within the stage `label`.
pub fn stream(seed: u64, label: &str, index: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_key(seed, label, index))
}

/// Stream keyed by two indices (e.g. user and day).
pub fn stream2(seed: u64, label: &str, a: u64, b: u64) -> StreamRng {
    let key = mix64(stream_key(seed, label, a) ^ mix64(b.wrapping_add(0x9E37_79B9_7F4A_7C15)));
    ChaCha8Rng::seed_from_u64(key)
}

fn stream_key(seed: u64, label: &str, index: u64) -> u64 {
    let mut z = mix64(seed ^ 0xA076_1D64_78BD_642F);
    z = mix64(z ^ fnv1a64(label.as_bytes()));
    mix64(z ^ index.wrapping_mul(0x8E9D_5A8F_6A09_E667))
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}

fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
