//! Seeded randomness. Every stage draws from its own ChaCha stream keyed by
//! one 64-bit seed, so stages stay reproducible independently of each other.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream of observation locations.
pub const STREAM_POINTS: u64 = 1;
/// Stream of standard normal field draws.
pub const STREAM_NORMALS: u64 = 2;
/// Stream of the train/test permutation.
pub const STREAM_SPLIT: u64 = 3;
/// Stream of randomly drawn anchor points.
pub const STREAM_TAU: u64 = 4;

/// Generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for an independent sub-experiment identified by `tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.wrapping_add(1 << 32));
    rng.next_u64()
}
