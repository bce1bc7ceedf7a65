//! Seed handling.
//!
//! Every random draw in the crate goes through [`Rng`], a ChaCha8 stream
//! cipher generator keyed from a 64-bit seed. ChaCha output is specified
//! bit-for-bit, so runs are reproducible across platforms.
//!
//! One master seed fans out into independent component seeds through
//! SplitMix64: component `k` of master `m` is `splitmix64(m ^ splitmix64(k + 1))`.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// In-place Fisher-Yates shuffle. Draws are taken as `u64` so the result
/// does not depend on the platform's pointer width.
pub fn shuffle<T>(rng: &mut Rng, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i as u64) as usize;
        items.swap(i, j);
    }
}

/// One round of the SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, component: u64) -> u64 {
    splitmix64(master ^ splitmix64(component.wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedSet {
    pub model: u64,
    pub codebook: u64,
    pub reducer: u64,
    pub split: u64,
    pub stream: u64,
}

impl SeedSet {
    pub fn from_master(master: u64) -> Self {
        SeedSet {
            model: derive(master, 0),
            codebook: derive(master, 1),
            reducer: derive(master, 2),
            split: derive(master, 3),
            stream: derive(master, 4),
        }
    }

    /// Seeds for repeat `k` of a multi-run experiment. Repeat 0 uses the
    /// master seed unchanged.
    pub fn for_repeat(master: u64, repeat: u32) -> Self {
        if repeat == 0 {
            Self::from_master(master)
        } else {
            Self::from_master(derive(master, 0x5245_5045_4154 + repeat as u64))
        }
    }
}
