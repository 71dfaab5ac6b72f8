//! Floating point scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Real scalar type the library is generic over: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` constant.
    fn of(value: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(value).expect("finite f64 constant")
    }

    /// Conversion from a count.
    fn of_usize(value: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(value).expect("usize fits a float")
    }

    /// Tolerance for "sums to one" checks over `len` entries.
    fn sum_tolerance(len: usize) -> Self {
        Self::of(1e-9).max(Self::epsilon() * Self::of_usize(4 * len.max(1)))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Squared Euclidean distance between two equal-length slices.
#[inline]
pub fn squared_distance<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).fold(F::zero(), |acc, (&x, &y)| {
        let diff = x - y;
        acc + diff * diff
    })
}
