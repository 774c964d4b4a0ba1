//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar the models are generic over: `f32` or `f64`.
///
/// The FFT bound is what ties this to the two primitive float types; the
/// autocorrelation estimator goes through `rustfft`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + FromStr
    + rustfft::FftNum
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used for literals and uniform draws.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    fn of_u64(n: u64) -> Self {
        <Self as FromPrimitive>::from_u64(n).expect("u64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Ratio of two counts, `0` when the denominator is zero.
pub(crate) fn ratio<F: Real>(num: u64, den: u64) -> F {
    if den == 0 {
        F::zero()
    } else {
        F::of_u64(num) / F::of_u64(den)
    }
}
