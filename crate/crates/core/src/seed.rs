//! Seed derivation.
//!
//! Every stochastic routine takes an explicit `u64` seed. Child seeds are
//! derived from a parent seed and a path of integer tags with SplitMix64, so
//! the seed of any replicate can be recomputed without running its siblings:
//!
//! ```text
//! master ──► command tag ──► module tag ──► replicate index
//! ```

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Tags for the first level of the derivation tree.
pub mod tags {
    pub const TEST: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const FORECAST: u64 = 3;
    pub const FIT: u64 = 4;

    pub const COV_BOOTSTRAP: u64 = 10;
    pub const NULL_BOOTSTRAP: u64 = 11;
    pub const PANEL: u64 = 20;
    pub const HYPOTHESIS_NULL: u64 = 21;
    pub const HYPOTHESIS_ALT: u64 = 22;
    pub const WINDOW: u64 = 30;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `parent` along `path`.
pub fn derive(parent: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(parent), |acc, &tag| splitmix64(acc ^ splitmix64(tag.wrapping_add(0x5851_F42D_4C95_7F2D))))
}

/// The generator used throughout the crate.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
