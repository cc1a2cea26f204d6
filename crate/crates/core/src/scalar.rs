//! Scalar abstraction for the numeric kernels.
//!
//! The math core (matrices, losses, Adam, graph kernels) is generic over
//! [`Scalar`]; everything above it (training, editors, experiments,
//! serialization) is pinned to `f64` via the [`crate::Real`] alias.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into this scalar type.
    fn from_f64_c(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant not representable")
    }

    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for `T::from_f64_c` in expression position.
pub fn real<T: Scalar>(x: f64) -> T {
    T::from_f64_c(x)
}
