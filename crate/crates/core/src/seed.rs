//! Seed splitting.
//!
//! Every run starts from one base seed. Episode `i` of a batch uses
//! `base + i`; inside an episode each consumer draws from its own stream,
//! seeded with `splitmix64(seed ^ stream_tag)`. Streams never share state,
//! so adding draws to one consumer does not shift another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_PERCEPTION: u64 = 0x7065_7263;
pub const STREAM_PLANNER: u64 = 0x706c_616e;
pub const STREAM_DEMOS: u64 = 0x6465_6d6f;
pub const STREAM_THEORY: u64 = 0x7468_656f;
pub const STREAM_SCENARIO: u64 = 0x7363_656e;

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn episode_seed(base: u64, index: usize) -> u64 {
    base.wrapping_add(index as u64)
}

pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ tag))
}
