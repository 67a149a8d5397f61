//! Seeded generator shared by every stochastic routine.
//!
//! All mechanisms draw from a ChaCha8 stream seeded with a `u64`. Monte Carlo
//! batches give run `i` the seed `base + i`, so a batch is reproducible run by
//! run regardless of how it is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type MechanismRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> MechanismRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of run `index` in a batch started at `base`.
pub fn run_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index)
}
