//! Deterministic seed derivation.
//!
//! Every random stream in the pipeline is keyed by a base seed plus a path of
//! integer tags (variant, pool, item index, ...). Streams derived this way are
//! independent of evaluation order, so batch work can be split arbitrarily
//! without changing its output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the SplitMix64 finalizer.
#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a base seed with a path of tags into a new 64-bit seed.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(base), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Seeded RNG for the stream identified by `(base, tags)`.
pub fn rng_for(base: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tags))
}

/// Stable numeric tags for named streams.
pub mod stream {
    pub const PLAN: u64 = 1;
    pub const SOUNDSCAPE: u64 = 2;
    pub const RENDER: u64 = 3;
    pub const MIX: u64 = 4;
    pub const CORRUPT: u64 = 5;
    pub const PROTOTYPES: u64 = 6;
    pub const TRAIN: u64 = 7;
    pub const TUNE: u64 = 8;
}
