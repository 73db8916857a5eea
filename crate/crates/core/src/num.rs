//! Scalar abstraction shared by every numeric module.
//!
//! All core math is generic over [`Real`], so the same code runs at `f32`
//! and `f64`. The synthesis and simulation entry points default to `f64`
//! through the aliases at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Working floating-point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal into the working scalar.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 literal converts into scalar")
    }

    /// Lossy view of the scalar as `f64`, for diagnostics and logging.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Shorthand for [`Real::of`], readable inside long formulas.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::of(x)
}

/// Deterministic 64-bit generator (splitmix64) for seeded sampling in
/// tests and benchmark plumbing. Not cryptographic.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform sample in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform sample in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}
