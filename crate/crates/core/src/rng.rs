//! Seed derivation.
//!
//! Every random draw in the crate is made from a [`ChaCha8Rng`] whose seed is
//! a pure function of a master seed and a path of integer tags (replicate,
//! purpose, grid cell, ...). Work can therefore be scheduled in any order, on
//! any number of threads, without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
pub mod purpose {
    pub const MEMBERSHIPS: u64 = 1;
    pub const EDGES: u64 = 2;
    pub const CONSTRAINED_FIT: u64 = 3;
    pub const UNCONSTRAINED_FIT: u64 = 4;
    pub const MODEL_SAMPLE: u64 = 5;
    pub const REPLICATE: u64 = 6;
    pub const RESTART: u64 = 7;
}

#[inline]
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hashes `master` together with `path` into a new seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &tag| {
        splitmix64(acc ^ splitmix64(tag))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(master: u64, path: &[u64]) -> Rng {
    rng_from_seed(derive_seed(master, path))
}
