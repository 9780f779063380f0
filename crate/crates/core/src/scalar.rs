//! Scalar abstraction for costs, weights and LP arithmetic.
//!
//! Game quantities only need field operations and ordering, so everything in
//! [`crate::game`], [`crate::dynamics`] and the simplex solver is written once
//! against [`Scalar`] and runs on binary floats as well as exact rationals.
//! Comparisons between aggregates go through [`Scalar::tolerance`], which is
//! zero for exact types.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_rational::Rational64;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Copy + PartialOrd + Debug + Display + FromPrimitive + ToPrimitive + Sum + Send + Sync + 'static
{
    /// Absolute slack used by every `approx_*` comparison.
    fn tolerance() -> Self;

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn approx_eq(self, other: Self) -> bool {
        (self - other).abs() <= Self::tolerance()
    }

    /// `self < other` by more than the tolerance.
    #[inline]
    fn definitely_lt(self, other: Self) -> bool {
        other - self > Self::tolerance()
    }

    /// `self <= other` up to the tolerance.
    #[inline]
    fn approx_le(self, other: Self) -> bool {
        self - other <= Self::tolerance()
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn tolerance() -> Self {
        1e-9
    }
}

impl Scalar for f32 {
    #[inline]
    fn tolerance() -> Self {
        1e-4
    }
}

impl Scalar for Rational64 {
    #[inline]
    fn tolerance() -> Self {
        Rational64::from_integer(0)
    }

    fn to_f64_lossy(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
