//! Scalar abstraction shared by every numerical module.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Real floating-point scalar the library computes in (`f32` or `f64`).
pub trait Real: RealField + Copy + ToPrimitive + Default + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + ToPrimitive + Default + Send + Sync + 'static {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn cst<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts a count or index into the working scalar.
#[inline]
pub(crate) fn from_usize<T: Real>(n: usize) -> T {
    nalgebra::convert(n as f64)
}

/// Lossy view of a scalar as `f64`, used for diagnostics and serialization.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
