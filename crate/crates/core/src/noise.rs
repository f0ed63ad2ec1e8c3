//! Counter-based random streams.
//!
//! Every random draw in a simulation is keyed by a tuple of integers (seed,
//! stream tag, frame, sensor ids, element index). The key is hashed into a
//! ChaCha seed, so a draw never depends on how many other draws happened
//! before it or on which worker evaluated it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub(crate) const STREAM_MARKER_PIXELS: u64 = 0x4d41_524b;
pub(crate) const STREAM_VO_TRACKS: u64 = 0x564f_5452;
pub(crate) const STREAM_VO_FIELD: u64 = 0x564f_4644;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn hash_key(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c908, |acc, w| splitmix(acc ^ splitmix(*w)))
}

pub(crate) fn keyed_rng(words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash_key(words))
}

/// Two independent standard normal draws for `key`.
pub(crate) fn standard_normal_pair(words: &[u64]) -> (f64, f64) {
    let mut rng = keyed_rng(words);
    (
        StandardNormal.sample(&mut rng),
        StandardNormal.sample(&mut rng),
    )
}
