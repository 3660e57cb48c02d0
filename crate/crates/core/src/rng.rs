//! Deterministic random substreams.
//!
//! Every stochastic draw in the crate comes from a stream addressed by
//! `(master_seed, purpose, index)`. The three coordinates are folded into a
//! single 64-bit seed with the SplitMix64 finalizer:
//!
//! ```text
//! fmix(z)  = z ^= z >> 30; z *= 0xbf58476d1ce4e5b9;
//!            z ^= z >> 27; z *= 0x94d049bb133111eb;
//!            z ^ (z >> 31)
//! a        = fmix(master_seed + 0x9e3779b97f4a7c15 * (purpose + 1))
//! key      = fmix(a ^ (index * 0xd1b54a32d192ed03))        (wrapping arithmetic)
//! ```
//!
//! and the stream itself is `ChaCha8Rng::seed_from_u64(key)`. Changing any
//! of these constants changes every generated dataset; treat them as part of
//! the file format.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const INDEX_MULT: u64 = 0xd1b5_4a32_d192_ed03;

/// What a stream is used for. The discriminant is the `purpose` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Purpose {
    Positions = 1,
    Measurement = 2,
    Boarding = 3,
    Split = 4,
    Shuffle = 5,
    Dropout = 6,
    Init = 7,
    Search = 8,
    TrialSeed = 9,
}

pub fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn stream_key(master_seed: u64, purpose: u32, index: u64) -> u64 {
    let a = splitmix64_finalize(master_seed.wrapping_add(GOLDEN.wrapping_mul(purpose as u64 + 1)));
    splitmix64_finalize(a ^ index.wrapping_mul(INDEX_MULT))
}

#[derive(Debug, Clone)]
pub struct RngStream {
    pub master_seed: u64,
    pub purpose: u32,
    pub index: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(master_seed: u64, purpose: Purpose, index: u64) -> Self {
        Self::with_purpose_id(master_seed, purpose as u32, index)
    }

    pub fn with_purpose_id(master_seed: u64, purpose: u32, index: u64) -> Self {
        Self {
            master_seed,
            purpose,
            index,
            inner: ChaCha8Rng::seed_from_u64(stream_key(master_seed, purpose, index)),
        }
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
