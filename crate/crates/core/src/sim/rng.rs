//! Counter-based random streams keyed by `(seed, day, stream)`.
//!
//! Every pair of every day owns an independent stream, so the result of a
//! day does not depend on how pairs are scheduled across threads.

use rand::rand_core::impls;
use rand::RngCore;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// The SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A SplitMix64 sequence whose starting point is derived from the key.
#[derive(Debug, Clone)]
pub struct CounterRng {
    state: u64,
}

impl CounterRng {
    pub fn new(seed: u64, day: u64, stream: u64) -> Self {
        let a = mix64(seed ^ 0x6a09_e667_f3bc_c908);
        let b = mix64(a ^ day.wrapping_mul(GOLDEN));
        let state = mix64(b ^ stream.wrapping_add(0x3c6e_f372_fe94_f82b).wrapping_mul(GOLDEN));
        CounterRng { state }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl RngCore for CounterRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN);
        mix64(self.state)
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        impls::fill_bytes_via_next(self, dst)
    }
}
