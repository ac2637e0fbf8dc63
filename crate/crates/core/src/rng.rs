//! Seed plumbing. Every random draw in the crate goes through a ChaCha8
//! stream derived from a master seed and a component tag, so runs are
//! reproducible across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Component tags used to split a master seed.
pub mod tag {
    pub const NET_INIT: u64 = 1;
    pub const BOOTSTRAP: u64 = 2;
    pub const SGD_BATCH: u64 = 3;
    pub const MIXTURE: u64 = 4;
    pub const TRAIN_DATA: u64 = 5;
    pub const TEST_DATA: u64 = 6;
    pub const EVAL_DATA: u64 = 7;
    pub const TRAINER: u64 = 8;
    pub const ENV_THETA: u64 = 9;
}

/// Independent RNG stream for `(seed, component)`.
pub fn stream(seed: u64, component: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(component);
    rng
}

/// Derives a child seed; used when a component needs to hand seeds to
/// sub-components (e.g. one per bootstrap model).
pub fn child_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
