//! Scalar abstraction over the floating point types used throughout the crate.
//!
//! Signal processing and the tensor engine are generic over [`Scalar`] so the
//! same code path can run in `f32` (training default) and `f64` (gradient
//! checks, DSP reference computations).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating point scalar usable by every numeric routine in this crate.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum<Self>
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Dtype tag written into checkpoint and bundle headers.
    const DTYPE: &'static str;

    /// Conversion from `f64`, rounding to nearest for `f32`.
    fn of_f64(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts to scalar")
    }

    /// Widening conversion to `f64`.
    fn into_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }

    fn of_usize(x: usize) -> Self {
        Self::of_f64(x as f64)
    }
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        assert_eq!(<f32 as Scalar>::of_f64(1.5), 1.5f32);
        assert_eq!(2.25f64.into_f64(), 2.25);
        assert_eq!(f32::DTYPE, "f32");
        assert_eq!(f64::DTYPE, "f64");
    }
}
