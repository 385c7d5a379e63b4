//! Reproducible random streams.
//!
//! Every stream is a ChaCha8 generator (`rand_chacha::ChaCha8Rng`): the
//! 256-bit key is expanded from the 64-bit seed with
//! `SeedableRng::seed_from_u64`, and the 64-bit ChaCha stream id is a
//! SplitMix64 hash of a path of integers. Chain `c` of a fit uses path
//! `[CHAIN_DOMAIN, c]`; study `j` of a simulated dataset uses
//! `[STUDY_DOMAIN, j]`. Streams for distinct paths are independent and do
//! not depend on how many values other streams consume.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const CHAIN_DOMAIN: u64 = 1;
pub const STUDY_DOMAIN: u64 = 2;
pub const STUDY_PARAMS_DOMAIN: u64 = 3;
pub const REPLICATION_DOMAIN: u64 = 4;
pub const META_DOMAIN: u64 = 5;

#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Hash of an integer path, order sensitive.
pub fn hash_path(path: &[u64]) -> u64 {
    path.iter().fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Seed derived from a base seed and a path, e.g. `(base, scenario, rep)`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    splitmix64(seed ^ hash_path(path))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(hash_path(path));
    rng
}

pub fn chain_stream(seed: u64, chain: usize) -> Rng {
    stream(seed, &[CHAIN_DOMAIN, chain as u64])
}
