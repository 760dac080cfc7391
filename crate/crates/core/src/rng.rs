//! Seeded random streams.
//!
//! Every independent unit of work (a trajectory, a split shuffle, a batch
//! order) draws from its own ChaCha stream derived from the run seed, so
//! results do not depend on evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream reserved for the train/validation/test split.
pub const SPLIT_STREAM: u64 = u64::MAX;
/// Stream reserved for minibatch shuffling.
pub const SHUFFLE_STREAM: u64 = u64::MAX - 1;
/// Stream reserved for parameter initialisation.
pub const INIT_STREAM: u64 = u64::MAX - 2;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `tag` into `seed` (SplitMix64 finaliser) to get an unrelated seed.
pub fn derive(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
