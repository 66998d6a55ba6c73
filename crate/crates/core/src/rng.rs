//! Seed plumbing. Every random draw in the crate comes from a ChaCha8 stream
//! derived from a 64-bit seed, so results depend only on `(inputs, seed)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `(tag, index)` under `seed`.
pub fn stream(seed: u64, tag: u32, index: u32) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((tag as u64) << 32) | index as u64);
    r
}

/// Derives a child seed, for APIs that take a `u64` seed rather than an RNG.
pub fn derive_seed(seed: u64, tag: u32, index: u32) -> u64 {
    use rand::RngCore;
    stream(seed, tag, index).next_u64()
}

pub mod tags {
    pub const INIT: u32 = 1;
    pub const PARTITION: u32 = 2;
    pub const BATCH: u32 = 3;
    pub const HASH: u32 = 4;
    pub const SAMPLING: u32 = 5;
    pub const SERVER: u32 = 6;
    pub const EVAL: u32 = 7;
    pub const SYNTH: u32 = 8;
    pub const SPLIT: u32 = 9;
}
