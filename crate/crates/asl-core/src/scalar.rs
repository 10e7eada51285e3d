//! Scalar abstraction over the two supported precisions.
//!
//! The engine trains in `f32` and runs the finite-difference gradient suite in
//! `f64`; everything numeric is generic over [`Scalar`] so both paths share one
//! implementation.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Element type of a [`crate::tensor::Tensor`]: `f32` or `f64`.
pub trait Scalar: Float + Default + Debug + Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Largest representable value strictly below a finite `self`. Used to keep
    /// half-open sampling intervals half-open after rounding.
    fn next_down(self) -> Self;
}

impl Scalar for f32 {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }

    fn next_down(self) -> Self {
        debug_assert!(self.is_finite());
        if self == 0.0 {
            -f32::from_bits(1)
        } else if self > 0.0 {
            f32::from_bits(self.to_bits() - 1)
        } else {
            f32::from_bits(self.to_bits() + 1)
        }
    }
}

impl Scalar for f64 {
    #[inline(always)]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }

    fn next_down(self) -> Self {
        debug_assert!(self.is_finite());
        if self == 0.0 {
            -f64::from_bits(1)
        } else if self > 0.0 {
            f64::from_bits(self.to_bits() - 1)
        } else {
            f64::from_bits(self.to_bits() + 1)
        }
    }
}
