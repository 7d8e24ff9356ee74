//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit [`Rng`], a xoshiro256++
//! generator. Independent per-trial streams are derived from a master seed
//! with [`derive_seed`], which feeds `(seed, index)` through two rounds of the
//! SplitMix64 finalizer. The same seed therefore reproduces the same draws on
//! every platform.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Rng = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a master seed with a stream index into a new seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ index.wrapping_mul(GOLDEN_GAMMA).rotate_left(17))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Generator for stream `index` of master seed `seed`.
pub fn stream(seed: u64, index: u64) -> Rng {
    rng_from_seed(derive_seed(seed, index))
}
