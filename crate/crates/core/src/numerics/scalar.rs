//! Scalar abstractions.
//!
//! [`Real`] is a plain floating point type (`f32` or `f64`) and is what the
//! linear algebra and optimisation kernels are written against. [`Scalar`] is
//! anything a model can be evaluated with: a [`Real`], or a derivative-carrying
//! [`Dual`](super::Dual) built on top of one.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, One, Zero};

/// floating point: f32 or f64
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    fn cst(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 constant representable")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite cast")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// A number a model can be evaluated with.
///
/// Operations consume their operands; derivative-carrying scalars are not
/// `Copy`, so generic model code clones where a value is reused.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
    + 'static
{
    /// A constant (zero derivative) with the given value.
    fn cst(x: f64) -> Self;

    /// The primal value.
    fn re(&self) -> f64;

    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powf(self, e: f64) -> Self;
    fn powi(self, n: i32) -> Self;

    /// Value and all derivative components finite.
    fn is_finite(&self) -> bool;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
}

macro_rules! impl_scalar_for_real {
    ($($t:ty),*) => {$(
        impl Scalar for $t {
            #[inline]
            fn cst(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn re(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                Float::exp(self)
            }
            #[inline]
            fn ln(self) -> Self {
                Float::ln(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                Float::sqrt(self)
            }
            #[inline]
            fn powf(self, e: f64) -> Self {
                Float::powf(self, e as $t)
            }
            #[inline]
            fn powi(self, n: i32) -> Self {
                Float::powi(self, n)
            }
            #[inline]
            fn is_finite(&self) -> bool {
                Float::is_finite(*self)
            }
        }
    )*};
}

impl_scalar_for_real!(f32, f64);
