//! Named random sub-streams derived from a single root seed.
//!
//! Every stochastic component (weight init, data shuffling, CV split, ICA
//! start, synthetic cohort) draws from its own stream so that any one of them
//! can be re-seeded without perturbing the others.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// FNV-1a over the stream name, mixed with the root seed by splitmix64.
fn derive(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(root ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic generator for the sub-stream `name` of `root`.
pub fn stream(root: u64, name: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive(root, name))
}

/// Child seed for a named sub-component, for APIs that take a plain seed.
pub fn sub_seed(root: u64, name: &str) -> u64 {
    let mut rng = stream(root, name);
    rng.next_u64()
}
