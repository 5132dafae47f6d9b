//! Floating-point scalar abstraction shared by the numerical modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, RemAssign, SubAssign};

use num_traits::{Float, FromPrimitive, Num};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar type the power-flow, environment, and Q-network code is generic over.
///
/// Implemented for `f32` and `f64`. Case data is always stored as `f64` and
/// converted on entry with [`Scalar::of`].
pub trait Scalar:
    Float
    + FromPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + RemAssign
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal or case value into this scalar type.
    fn of(value: f64) -> Self;

    /// Widens back to `f64` for reporting and serialization.
    fn to_f64_lossless(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(value: f64) -> Self {
        value
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

/// Ordered field used by the reward terms.
///
/// Satisfied by the float scalars and by exact rationals such as
/// [`crate::Rational`], so reward arithmetic can be checked without rounding.
pub trait Field: Num + PartialOrd + Clone + FromPrimitive {}

impl<T: Num + PartialOrd + Clone + FromPrimitive> Field for T {}
