//! Seeded randomness.
//!
//! Every random draw in the simulator comes from a [`SimRng`] built from an
//! explicit seed. Parallel work derives child seeds from a base seed and a
//! path of indices, so results never depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an index path.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632b_e59b_d9b4_e019))))
}

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn derived_rng(base: u64, path: &[u64]) -> SimRng {
    rng_from_seed(derive_seed(base, path))
}

/// Uniform random bits in {0, 1}, taken straight from the generator's output words.
pub fn random_bits<R: RngCore + ?Sized>(n: usize, rng: &mut R) -> Vec<u8> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let word = rng.next_u64();
        let take = (n - out.len()).min(64);
        out.extend((0..take).map(|i| ((word >> i) & 1) as u8));
    }
    out
}
