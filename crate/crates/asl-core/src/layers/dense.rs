//! Fully connected layer `y = x.W + b` with an optional fused ReLU.

use crate::error::{Error, Result};
use crate::layers::init::glorot_dense;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gemm_acc, gemm_at_acc, transpose, Tensor};

pub struct Dense<T> {
    /// `[fan_in, fan_out]`
    pub weights: Tensor<T>,
    /// `[fan_out]`
    pub bias: Tensor<T>,
    pub relu: bool,
}

pub struct DenseCache<T> {
    input: Tensor<T>,
    keep: Option<Vec<u8>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(rng: &mut Rng, fan_in: usize, fan_out: usize, relu: bool) -> Self {
        Dense {
            weights: glorot_dense(rng, fan_in, fan_out),
            bias: Tensor::zeros(&[fan_out]),
            relu,
        }
    }

    fn dims(&self) -> (usize, usize) {
        (self.weights.shape()[0], self.weights.shape()[1])
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let (fan_in, _) = self.dims();
        let &[n, f] = x.shape() else {
            return Err(Error::shape(format!(
                "dense input must be 2-D, got {:?}",
                x.shape()
            )));
        };
        if f != fan_in {
            return Err(Error::shape(format!(
                "dense expects {fan_in} features, got {f}"
            )));
        }
        Ok(n)
    }

    fn forward_impl(&self, x: &Tensor<T>, keep_cache: bool) -> Result<(Tensor<T>, Option<DenseCache<T>>)> {
        let n = self.check_input(x)?;
        let (fan_in, fan_out) = self.dims();
        let mut out = Tensor::from_fn(&[n, fan_out], |i| self.bias.data()[i % fan_out]);
        gemm_acc(n, fan_in, fan_out, x.data(), self.weights.data(), out.data_mut());

        let keep = if self.relu {
            let mut mask = vec![0u8; out.len()];
            for (o, m) in out.data_mut().iter_mut().zip(&mut mask) {
                if *o > T::zero() {
                    *m = 1;
                } else {
                    *o = T::zero();
                }
            }
            Some(mask)
        } else {
            None
        };

        let cache = keep_cache.then(|| DenseCache {
            input: x.clone(),
            keep,
        });
        Ok((out, cache))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, DenseCache<T>)> {
        let (out, cache) = self.forward_impl(x, true)?;
        Ok((out, cache.unwrap()))
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_impl(x, false)?.0)
    }

    /// Forward with the ReLU selection pinned to a previous forward's cache;
    /// see `Conv2d::forward_replay` for why finite differences need this.
    pub fn forward_replay(&self, x: &Tensor<T>, cache: &DenseCache<T>) -> Result<Tensor<T>> {
        let n = self.check_input(x)?;
        let (fan_in, fan_out) = self.dims();
        let mut out = Tensor::from_fn(&[n, fan_out], |i| self.bias.data()[i % fan_out]);
        gemm_acc(n, fan_in, fan_out, x.data(), self.weights.data(), out.data_mut());
        if let Some(mask) = &cache.keep {
            if mask.len() != out.len() {
                return Err(Error::shape("replay input does not match cached shape"));
            }
            for (o, &m) in out.data_mut().iter_mut().zip(mask) {
                if m == 0 {
                    *o = T::zero();
                }
            }
        }
        Ok(out)
    }

    /// Returns (grad wrt input, grad wrt weights, grad wrt bias).
    pub fn backward(
        &self,
        cache: &DenseCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let (fan_in, fan_out) = self.dims();
        let n = cache.input.shape()[0];
        if grad_out.shape() != [n, fan_out] {
            return Err(Error::shape(format!(
                "dense backward: grad shape {:?}, expected [{n}, {fan_out}]",
                grad_out.shape()
            )));
        }

        let g_store;
        let g: &[T] = match &cache.keep {
            Some(mask) => {
                g_store = grad_out
                    .data()
                    .iter()
                    .zip(mask)
                    .map(|(&g, &m)| if m == 1 { g } else { T::zero() })
                    .collect::<Vec<_>>();
                &g_store
            }
            None => grad_out.data(),
        };

        let mut grad_b = Tensor::zeros(&[fan_out]);
        for row in g.chunks_exact(fan_out) {
            for (acc, &gv) in grad_b.data_mut().iter_mut().zip(row) {
                *acc = *acc + gv;
            }
        }

        let mut grad_w = Tensor::zeros(&[fan_in, fan_out]);
        gemm_at_acc(n, fan_in, fan_out, cache.input.data(), g, grad_w.data_mut());

        let wt = transpose(fan_in, fan_out, self.weights.data());
        let mut grad_x = Tensor::zeros(&[n, fan_in]);
        gemm_acc(n, fan_out, fan_in, g, &wt, grad_x.data_mut());
        Ok((grad_x, grad_w, grad_b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::uniform;

    #[test]
    fn hand_value() {
        let dense = Dense {
            weights: Tensor::new(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap(),
            bias: Tensor::new(&[2], vec![0.5f64, -0.5]).unwrap(),
            relu: false,
        };
        let x = Tensor::new(&[1, 2], vec![1.0f64, 1.0]).unwrap();
        let (out, _) = dense.forward(&x).unwrap();
        assert_eq!(out.data(), &[4.5, 5.5]);
    }

    #[test]
    fn relu_clamps_and_masks() {
        let dense = Dense {
            weights: Tensor::new(&[1, 2], vec![1.0f64, -1.0]).unwrap(),
            bias: Tensor::zeros(&[2]),
            relu: true,
        };
        let x = Tensor::new(&[1, 1], vec![2.0f64]).unwrap();
        let (out, cache) = dense.forward(&x).unwrap();
        assert_eq!(out.data(), &[2.0, 0.0]);
        let g = Tensor::full(&[1, 2], 1.0f64);
        let (dx, dw, db) = dense.backward(&cache, &g).unwrap();
        // second unit was cut, so only the first contributes
        assert_eq!(dx.data(), &[1.0]);
        assert_eq!(dw.data(), &[2.0, 0.0]);
        assert_eq!(db.data(), &[1.0, 0.0]);
    }

    #[test]
    fn backward_matches_transpose_identities() {
        // dx = g.W^T and dW = x^T.g, checked against tensor-level products
        let mut rng = Rng::new(9);
        let dense = Dense::<f64>::new(&mut rng, 7, 4, false);
        let x = uniform::<f64>(&mut rng, -1.0, 1.0, &[5, 7]).unwrap();
        let g = uniform::<f64>(&mut rng, -1.0, 1.0, &[5, 4]).unwrap();
        let (_, cache) = dense.forward(&x).unwrap();
        let (dx, dw, db) = dense.backward(&cache, &g).unwrap();

        let wt = Tensor::new(&[4, 7], transpose(7, 4, dense.weights.data())).unwrap();
        let xt = Tensor::new(&[7, 5], transpose(5, 7, x.data())).unwrap();
        let dx_ref = g.matmul(&wt).unwrap();
        let dw_ref = xt.matmul(&g).unwrap();
        for (a, b) in dx.data().iter().zip(dx_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in dw.data().iter().zip(dw_ref.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (c, &v) in db.data().iter().enumerate() {
            let col_sum: f64 = (0..5).map(|r| g.data()[r * 4 + c]).sum();
            assert!((v - col_sum).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_wrong_width() {
        let mut rng = Rng::new(9);
        let dense = Dense::<f32>::new(&mut rng, 7, 4, false);
        let x = Tensor::<f32>::zeros(&[5, 8]);
        assert!(dense.forward(&x).is_err());
    }
}
