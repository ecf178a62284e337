//! Scalar traits the numeric modules are generic over.
//!
//! Floating point code (statistics, ECC tails) is written against [`Real`],
//! which every `num_traits::Float` type satisfies. The subset-sampling
//! combinatorics only need field operations, so they are written against
//! [`Scalar`], which additionally admits exact rationals.

use std::fmt::Debug;

use num_rational::Ratio;
use num_traits::{Float, FromPrimitive, Num};

/// A field-like scalar: enough for the exact hypergeometric and
/// order-statistic computations.
pub trait Scalar: Clone + PartialOrd + Num + Debug {
    fn from_count(n: u64) -> Self;

    /// Lossy conversion used for reporting.
    fn to_f64(&self) -> f64;
}

macro_rules! impl_scalar_float {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_count(n: u64) -> Self {
                n as $t
            }

            #[inline]
            fn to_f64(&self) -> f64 {
                *self as f64
            }
        }
    };
}

impl_scalar_float!(f32);
impl_scalar_float!(f64);

macro_rules! impl_scalar_ratio {
    ($t:ty) => {
        impl Scalar for Ratio<$t> {
            fn from_count(n: u64) -> Self {
                Ratio::from_integer(<$t>::try_from(n).expect("count exceeds rational range"))
            }

            fn to_f64(&self) -> f64 {
                *self.numer() as f64 / *self.denom() as f64
            }
        }
    };
}

impl_scalar_ratio!(i64);
impl_scalar_ratio!(i128);

/// Floating point scalar for routines that need `exp`, `ln`, `sqrt`.
pub trait Real: Float + FromPrimitive + Debug + Send + Sync + 'static {
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_count(n: usize) -> Self {
        Self::from_usize(n).expect("count is representable")
    }
}

impl<T: Float + FromPrimitive + Debug + Send + Sync + 'static> Real for T {}
