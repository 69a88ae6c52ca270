//! Scalar abstraction for the numeric kernels.
//!
//! The estimation formulas (weighted least squares, sandwich variances,
//! propensity algebra) are plain field arithmetic, so [`linalg`](crate::linalg)
//! is written against this trait and works at `f32` or `f64`. Pipeline types
//! pin [`Real`](crate::Real) because tolerances and file formats are
//! double-precision by contract.

use num_traits::{Float, NumAssign, NumCast};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// IEEE float usable by the numeric kernels.
pub trait Scalar: Float + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Conversion from `f64` (exact for `f64` itself, rounded for `f32`).
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("float-to-float cast cannot fail")
    }

    /// Widening conversion to `f64`.
    fn to_f64(self) -> f64;

    /// Count-to-scalar conversion for averaging.
    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

impl Scalar for f64 {
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    fn to_f64(self) -> f64 {
        self as f64
    }
}
