//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from an experiment seed and a stream label.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derives a child seed (splitmix64 finalizer over the pair).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

/// Stream labels.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const LEARNER: u64 = 2;
    pub const EXPLORATION: u64 = 3;
    pub const DROPS: u64 = 4;
    pub const PROFILES: u64 = 5;
    pub const PERTURBATION: u64 = 6;
}
