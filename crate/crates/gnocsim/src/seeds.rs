//! Seed derivation.
//!
//! All randomness in an experiment flows from one root seed through named
//! sub-streams (`partition`, `batch`, `sa`, `synth`, ...) so that varying one
//! component does not perturb the draws of another.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive the seed of the named sub-stream from the root seed.
pub fn sub_seed(root: u64, label: &str) -> u64 {
    let mut h = splitmix64(root ^ 0x51ab_7801_c3d5_92e4);
    for &b in label.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// Seeded RNG for the named sub-stream.
pub fn rng_for(root: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(root, label))
}
