//! Keyed random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream addressed by a
//! `(seed, purpose, index)` key, so a replicate or a block of Gaussian draws
//! produces the same numbers whether it runs first, last, or on another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const PURPOSE_GENERATE: u64 = 0x6765_6e65;
pub(crate) const PURPOSE_BOOTSTRAP: u64 = 0x626f_6f74;
pub(crate) const PURPOSE_GAUSSIAN: u64 = 0x6761_7573;
pub(crate) const PURPOSE_REPLICATION: u64 = 0x7265_706c;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a list of words into a derived seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(mix64(seed), |acc, &p| mix64(acc ^ mix64(p)))
}

/// Independent stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[purpose]));
    rng.set_stream(index);
    rng
}
