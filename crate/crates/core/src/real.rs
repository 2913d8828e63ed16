//! Scalar abstraction shared by every numeric kernel in the crate.
//!
//! Model quantities (weights, masses, probabilities, forward messages) are
//! stored in a generic [`Real`]. Random variates are always drawn in `f64`
//! and converted, so a chain run in `f32` consumes the same random stream as
//! one run in `f64`.

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point type usable as the model scalar.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap_or_else(Self::nan)
    }

    /// Conversion from a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(Self::infinity)
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive normal value, used to keep split masses strictly positive.
    #[inline]
    fn tiny() -> Self {
        Self::min_positive_value()
    }

    /// Tolerance for consistency checks on sums of probabilities.
    #[inline]
    fn check_tol() -> f64 {
        (256.0 * Self::epsilon().f64()).max(1e-9)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `ln(sum(exp(xs)))` without overflow. Returns `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}
