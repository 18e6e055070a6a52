//! Scalar abstraction shared by every numeric kernel in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point storage type for coordinates, attributes and filters: `f32` or `f64`.
///
/// Statistics that feed eigen-decompositions are always accumulated in `f64`,
/// whatever the storage type.
pub trait Real: Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static {
    /// Number of bytes in the little-endian encoding.
    const BYTES: usize;

    fn from_f64_lossy(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    /// Bit pattern widened to 64 bits, used for content hashing.
    fn to_bits_u64(self) -> u64;
}

impl Real for f32 {
    const BYTES: usize = 4;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }

    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits() as u64
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    #[inline]
    fn from_f64_lossy(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }

    #[inline]
    fn to_bits_u64(self) -> u64 {
        self.to_bits()
    }
}

#[inline]
pub(crate) fn cast<T: Real>(x: f64) -> T {
    T::from_f64_lossy(x)
}
