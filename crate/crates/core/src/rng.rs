//! Reproducible random streams.
//!
//! Every chain draws from its own ChaCha stream selected by chain index, so a
//! batch produces the same numbers whatever the thread schedule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `index` under `key`.
pub fn stream(key: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(index);
    rng
}

/// Root generator for a run.
pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws a fresh key from `rng` for a family of per-chain streams.
pub fn fork_key<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

/// SplitMix64 finalizer, for deriving keys from structured indices.
pub fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
