//! Seeded random streams.
//!
//! Every consumer draws from its own ChaCha stream selected by a purpose tag
//! and an index, so e.g. training and test deployments built from the same
//! user seed never share random numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    TestSet = 1,
    TrainSet = 2,
    ModelInit = 3,
    PpoRollout = 4,
    PpoShuffle = 5,
    RandomWalk = 6,
    PolicyRollout = 7,
    TrainShuffle = 8,
    Synth = 9,
    Split = 10,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | (index & 0xffff_ffff));
    rng
}
