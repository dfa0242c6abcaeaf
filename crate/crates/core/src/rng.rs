//! Seeded random streams.
//!
//! Every random draw in a run comes from a stream keyed by `(seed, round, stage, lane)`, so
//! a round can be replayed from a checkpoint without carrying generator state, and per-agent
//! work can run concurrently without sharing a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Consumers of randomness. The discriminant is part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Population = 1,
    Graph = 2,
    Recommend = 3,
    Pairing = 4,
    TopicChoice = 5,
    Backend = 6,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for one `(round, stage, lane)` slot of a run seeded with `seed`.
pub fn stream(seed: u64, round: u32, stage: Stage, lane: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = splitmix64(
        splitmix64(u64::from(round) ^ ((stage as u64) << 40)).wrapping_add(splitmix64(lane)),
    );
    rng.set_stream(key);
    rng
}

/// Plain seeded generator, for callers outside the round loop.
pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}
