//! Counter-based random streams.
//!
//! Every random draw is keyed by `(seed, key...)`, so the content of one scene,
//! detection or region does not depend on what was generated before it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const TAG_LAYOUT: u64 = 1;
pub const TAG_DETECTION: u64 = 2;
pub const TAG_REGION: u64 = 3;
pub const TAG_LOGITS: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for the given key path.
pub fn stream(seed: u64, keys: &[u64]) -> ChaCha8Rng {
    let mut state = splitmix64(seed);
    for &k in keys {
        state = splitmix64(state ^ splitmix64(k));
    }
    ChaCha8Rng::seed_from_u64(state)
}
