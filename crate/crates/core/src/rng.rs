//! Random number streams.
//!
//! A chain owns one [`ChainRng`]. Inside a particle sweep every particle at every
//! step gets its own stream derived from `(sweep seed, step, particle)`, so the
//! result does not depend on the order in which particles are processed.

use rand::SeedableRng;
use rand_xoshiro::{SplitMix64, Xoshiro256PlusPlus};

pub type ChainRng = Xoshiro256PlusPlus;
/// Cheap to seed, which matters because a sweep seeds one per particle and step.
pub type ParticleRng = SplitMix64;

/// Stream index reserved for resampling and final selection at a step.
pub const CONTROL_STREAM: u64 = u64::MAX;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn chain_rng(seed: u64) -> ChainRng {
    ChainRng::seed_from_u64(seed)
}

/// Key shared by all streams of one step; see [`keyed_stream`].
#[inline]
pub fn step_key(seed: u64, step: u64) -> u64 {
    mix64(seed ^ mix64(step))
}

/// Stream `index` under a key from [`step_key`]. Costs one mixing round, which
/// is why the sweep hoists the key out of its particle loop.
#[inline]
pub fn keyed_stream(key: u64, index: u64) -> ParticleRng {
    ParticleRng::seed_from_u64(mix64(key ^ index))
}

/// Independent stream keyed by `(seed, step, index)`.
#[inline]
pub fn substream(seed: u64, step: u64, index: u64) -> ParticleRng {
    keyed_stream(step_key(seed, step), index)
}
