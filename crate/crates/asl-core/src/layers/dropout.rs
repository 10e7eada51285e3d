//! Inverted dropout.
//!
//! Training zeroes each activation with probability `rate` and scales the
//! survivors by 1/(1-rate), so the expected activation is unchanged and
//! inference is the identity. The mask is drawn in row-major element order
//! from the stream the caller passes in, which makes a training step's mask
//! reproducible by re-forking the same stream.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct Dropout {
    pub rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::param(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    /// Draw a fresh keep/drop mask for a tensor of `len` elements.
    pub fn draw_mask(&self, rng: &mut Rng, len: usize) -> Vec<u8> {
        (0..len)
            .map(|_| u8::from(rng.next_f64() >= self.rate))
            .collect()
    }

    /// Apply a previously drawn mask: dropped entries become zero, kept
    /// entries are scaled by 1/(1-rate).
    pub fn apply<T: Scalar>(&self, x: &Tensor<T>, mask: &[u8]) -> Result<Tensor<T>> {
        if mask.len() != x.len() {
            return Err(Error::shape(format!(
                "dropout mask has {} entries for a tensor of {}",
                mask.len(),
                x.len()
            )));
        }
        let scale = T::from_f64(1.0 / (1.0 - self.rate));
        Ok(Tensor::new(
            x.shape(),
            x.data()
                .iter()
                .zip(mask)
                .map(|(&v, &m)| if m == 1 { v * scale } else { T::zero() })
                .collect(),
        )
        .expect("shape preserved"))
    }

    /// Backward is the same masked scaling applied to the gradient.
    pub fn backward<T: Scalar>(&self, grad_out: &Tensor<T>, mask: &[u8]) -> Result<Tensor<T>> {
        self.apply(grad_out, mask)
    }
}
