//! Counter-based seeding.
//!
//! Every random quantity is drawn from a ChaCha8 stream keyed by a 64-bit
//! seed, a domain tag and an index, so trial `i` of any harness can be
//! replayed in isolation and independent pools never share a stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated consumers of one seed on disjoint streams.
pub mod domain {
    pub const TRIAL: u64 = 0;
    pub const SCORE_NOISE: u64 = 1;
    pub const SAFETY_POOL: u64 = 2;
    pub const FIRST_UNSAFE_POOL: u64 = 3;
    pub const ORACLE: u64 = 4;
    pub const SHIELD_EVAL: u64 = 5;
}

/// Stream `index` under `domain` for `seed`.
pub fn keyed_rng(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Stream for trial `index` of a Monte-Carlo harness.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    keyed_rng(seed, domain::TRIAL, index)
}
