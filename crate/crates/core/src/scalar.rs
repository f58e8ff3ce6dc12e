//! Floating point abstraction shared by the statistical routines.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used by scores, bounds and heterogeneity summaries.
///
/// Implemented for `f32` and `f64`. Routines that call into special
/// functions (Normal tails, log-gamma) evaluate those in `f64` and convert
/// back, so `f32` callers get `f32` storage with `f64` intermediate accuracy.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts a literal or intermediate `f64` into `Self`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::of(v as f64)
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Cost type accepted by the assignment solver.
///
/// Integer costs give exact optimal totals; floating costs are compared
/// with plain `<`.
pub trait Cost:
    Copy + PartialOrd + Debug + Send + Sync + std::ops::Add<Output = Self> + std::ops::Sub<Output = Self>
{
    fn zero() -> Self;
    /// Value larger than any reachable reduced cost.
    fn infinity() -> Self;
    fn is_finite_cost(self) -> bool;
}

macro_rules! float_cost {
    ($($t:ty),*) => {$(
        impl Cost for $t {
            #[inline] fn zero() -> Self { 0.0 }
            #[inline] fn infinity() -> Self { <$t>::INFINITY }
            #[inline] fn is_finite_cost(self) -> bool { self.is_finite() }
        }
    )*};
}

macro_rules! int_cost {
    ($($t:ty),*) => {$(
        impl Cost for $t {
            #[inline] fn zero() -> Self { 0 }
            // Leaves headroom so potentials never overflow.
            #[inline] fn infinity() -> Self { <$t>::MAX / 4 }
            #[inline] fn is_finite_cost(self) -> bool { self < <$t>::MAX / 8 && self > <$t>::MIN / 8 }
        }
    )*};
}

float_cost!(f32, f64);
int_cost!(i32, i64);
