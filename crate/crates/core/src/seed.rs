//! Seed derivation and the generator used throughout the crate.
//!
//! Every random stage draws from a [`ChaCha8Rng`] seeded by [`derive_seed`],
//! which folds a parent seed and a list of integer tags through SplitMix64.
//! Stages that need independent streams (one per channel, one per document)
//! derive their own seed from the run seed plus their index, so results do
//! not depend on iteration order or thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeedRng = ChaCha8Rng;

/// Domain tags keep seeds of different pipeline stages apart even when the
/// remaining tags coincide.
pub mod tag {
    pub const CODEBOOK: u64 = 0x636f_6465;
    pub const GIBBS: u64 = 0x6769_6262;
    pub const FOLD_IN: u64 = 0x666f_6c64;
    pub const HYPER: u64 = 0x6879_7065;
    pub const SYNTHETIC: u64 = 0x7379_6e74;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(parent: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(parent), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(seed: u64) -> SeedRng {
    ChaCha8Rng::seed_from_u64(seed)
}
