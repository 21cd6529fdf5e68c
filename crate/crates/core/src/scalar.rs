//! Numeric traits the math modules are generic over.
//!
//! [`Scalar`] is the minimal ring-like bound used by closed-form arithmetic
//! (power model, allocator) so those paths can be checked with exact
//! rationals. [`Real`] adds the floating-point surface needed by geometry
//! and training.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, Num};

/// Exact-capable number: `f32`, `f64`, or a rational such as `Ratio<i128>`.
pub trait Scalar: Num + Copy + PartialOrd + Debug {}

impl<T: Num + Copy + PartialOrd + Debug> Scalar for T {}

/// Floating point: f32 or f64.
pub trait Real:
    Scalar
    + Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal; infallible for f32/f64.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal must be representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn min<T: PartialOrd>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

#[inline]
pub(crate) fn max<T: PartialOrd>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

#[inline]
pub(crate) fn clamp<T: PartialOrd>(x: T, lo: T, hi: T) -> T {
    max(lo, min(x, hi))
}
