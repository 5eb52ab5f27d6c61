//! Scalar abstraction: the numeric core is generic over `f32`/`f64`.
//!
//! Runs and the CLI use `f64` (see the crate-root aliases); `f32` is kept
//! working so the low-precision behaviour of the algorithms can be probed
//! in tests.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Floating-point scalar the numeric core is generic over.
pub trait Scalar:
    Float + FromPrimitive + NumAssignOps + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy cast from `f64`, for constants and config values.
    fn cast(value: f64) -> Self;

    /// Lossy cast to `f64`, for reporting.
    fn to_f64(self) -> f64;

    /// One standard-normal draw.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One draw uniform in `(-bound, bound)`.
    fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, bound: Self) -> Self;
}

impl Scalar for f64 {
    fn cast(value: f64) -> Self {
        value
    }

    fn to_f64(self) -> f64 {
        self
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, bound: Self) -> Self {
        rng.gen_range(-bound..bound)
    }
}

impl Scalar for f32 {
    fn cast(value: f64) -> Self {
        value as f32
    }

    fn to_f64(self) -> f64 {
        self as f64
    }

    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }

    fn uniform_symmetric<R: Rng + ?Sized>(rng: &mut R, bound: Self) -> Self {
        rng.gen_range(-bound..bound)
    }
}
