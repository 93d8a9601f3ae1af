//! Seed derivation.
//!
//! One global seed fans out to independent sub-streams by hashing the pair
//! `(base, stream)` with SplitMix64:
//!
//! ```text
//! derive_seed(base, stream) = splitmix64(base ^ splitmix64(stream + 1))
//! ```
//!
//! The stream ids below are fixed; changing them changes every derived run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id for the dataset split.
pub const STREAM_SPLIT: u64 = 0;
/// Stream id for head weight initialization.
pub const STREAM_HEAD_INIT: u64 = 1;
/// Stream id for the training loop (shuffle and dropout derive from this).
pub const STREAM_TRAIN: u64 = 2;
/// Sub-stream of the training seed used for per-epoch shuffles.
pub const STREAM_SHUFFLE: u64 = 3;
/// Sub-stream of the training seed used for dropout masks.
pub const STREAM_DROPOUT: u64 = 4;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, stream: u64) -> u64 {
    splitmix64(base ^ splitmix64(stream.wrapping_add(1)))
}

/// ChaCha8 generator for a derived sub-stream.
pub fn rng_for(base: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream))
}
