//! Seeding scheme.
//!
//! Every stream is a SplitMix64 generator (`rand_xoshiro::SplitMix64`,
//! state advanced by `0x9E3779B97F4A7C15` per draw). Trial `i` of a run with
//! base seed `s` uses the seed
//!
//! ```text
//! trial_seed(s, i) = first SplitMix64 output from state s ^ (i · 0x9E3779B97F4A7C15)
//! ```
//!
//! so a trial's stream depends only on `(s, i)`, never on scheduling.

use rand::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;

pub type HarnessRng = SplitMix64;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn rng_from_seed(seed: u64) -> HarnessRng {
    SplitMix64::seed_from_u64(seed)
}

pub fn trial_seed(base: u64, index: u64) -> u64 {
    rng_from_seed(base ^ index.wrapping_mul(GOLDEN_GAMMA)).next_u64()
}
