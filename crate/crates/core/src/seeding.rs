//! Deterministic RNG derivation.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by a base
//! seed plus a path of stream identifiers, so that results never depend on
//! evaluation order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a path of stream ids into a single 64-bit key.
pub fn mix(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn rng(seed: u64, path: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, path))
}

/// Stream tags, kept distinct so that adding a consumer never shifts another.
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const RENDER: u64 = 2;
    pub const DETECT: u64 = 3;
    pub const PRESS: u64 = 4;
    pub const DATASET: u64 = 5;
    pub const AUGMENT: u64 = 6;
    pub const DROPOUT: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const INIT: u64 = 9;
    pub const PIPELINE: u64 = 10;
    pub const SCENARIO: u64 = 11;
}
