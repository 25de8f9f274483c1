//! Floating point abstraction shared by every numerical kernel.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type a solve can run in. Implemented for `f32` and `f64`.
///
/// Setup data (basis, geometry) is always computed in `f64` and converted
/// with [`Real::of`]; global reductions are accumulated in `f64` through
/// [`Real::widen`] regardless of the working precision.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Size of one word in slow memory.
    const WORD_BYTES: usize;
    /// Short label, `"fp32"` or `"fp64"`.
    const LABEL: &'static str;

    fn of(x: f64) -> Self;
    fn widen(self) -> f64;
}

macro_rules! impl_real {
    ($t:ty, $bytes:expr, $label:expr) => {
        impl Real for $t {
            const WORD_BYTES: usize = $bytes;
            const LABEL: &'static str = $label;

            #[inline(always)]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline(always)]
            fn widen(self) -> f64 {
                self as f64
            }
        }
    };
}

impl_real!(f32, 4, "fp32");
impl_real!(f64, 8, "fp64");

/// Converts a slice of `f64` setup data into the working precision.
pub fn cast_slice<T: Real>(src: &[f64]) -> Vec<T> {
    src.iter().map(|&x| T::of(x)).collect()
}
