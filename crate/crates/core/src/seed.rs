//! Seed derivation so that every stream (patient, fold, cell, step) gets an
//! independent generator regardless of the order in which work is done.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

/// Stream tags, keep stable: they are part of the reproducibility contract.
pub mod stream {
    pub const PATIENT: u64 = 1;
    pub const FOLDS: u64 = 2;
    pub const INIT: u64 = 3;
    pub const BATCH: u64 = 4;
    pub const DROPOUT: u64 = 5;
    pub const VALIDATION_PAIRS: u64 = 6;
    pub const CELL: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const ROTATION: u64 = 9;
}
