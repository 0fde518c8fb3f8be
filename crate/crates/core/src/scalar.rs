//! Scalar abstraction for the scheduling math.
//!
//! Every cost table, dynamic program and oracle in this crate is generic over
//! [`Scalar`], so the same code runs on `f64` seconds in the simulator and on
//! exact rationals in the equivalence checks.

use std::fmt::Debug;
use std::iter::Sum;

use num_rational::Ratio;
use num_traits::Num;

/// A time-like number usable by the schedulers.
pub trait Scalar: Num + Copy + PartialOrd + Debug + Sum + Send + Sync + 'static {
    fn from_usize(n: usize) -> Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            #[inline]
            fn from_usize(n: usize) -> Self {
                n as $f
            }
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $f
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl Scalar for Ratio<i64> {
    fn from_usize(n: usize) -> Self {
        Ratio::from_integer(n as i64)
    }

    /// Exact for dyadic inputs and for the millisecond values used in profiles
    /// up to the precision of the continued-fraction approximation.
    fn from_f64(x: f64) -> Self {
        Ratio::approximate_float(x).expect("finite value representable as a ratio")
    }

    fn to_f64(self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
}
