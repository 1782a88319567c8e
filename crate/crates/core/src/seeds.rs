//! Deterministic sub-streams. Every random draw in the crate comes from a
//! ChaCha stream keyed by a base seed plus a path of integer tags, so results
//! do not depend on iteration or thread order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn derive(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix(seed), |h, &t| splitmix(h ^ splitmix(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, tags))
}

// Tag namespaces, so independent uses of one seed never share a stream.
pub(crate) const TAG_FIGURE: u64 = 1;
pub(crate) const TAG_MOTION: u64 = 2;
pub(crate) const TAG_SURFACE: u64 = 3;
pub(crate) const TAG_INIT: u64 = 4;
pub(crate) const TAG_ORDER: u64 = 5;
pub(crate) const TAG_STEP: u64 = 6;
pub(crate) const TAG_EVAL: u64 = 7;
pub(crate) const TAG_FIT: u64 = 8;
