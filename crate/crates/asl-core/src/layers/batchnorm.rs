//! Per-channel batch normalization over the trailing axis.
//!
//! Training normalizes by the current batch's statistics (population
//! variance, dividing by the count) and folds them into moving averages;
//! inference normalizes by the moving averages alone. Works on any rank
//! with channels last, so both [N,H,W,C] and [N,C] flow through the same
//! code.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct BatchNorm<T> {
    /// learned scale, `[C]`
    pub gamma: Tensor<T>,
    /// learned shift, `[C]`
    pub beta: Tensor<T>,
    /// `[C]`, updated only by `forward_train`
    pub moving_mean: Tensor<T>,
    /// `[C]`
    pub moving_var: Tensor<T>,
    pub eps: T,
    /// weight on the old moving value per update
    pub momentum: T,
}

pub struct BnCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::full(&[channels], T::one()),
            beta: Tensor::zeros(&[channels]),
            moving_mean: Tensor::zeros(&[channels]),
            moving_var: Tensor::full(&[channels], T::one()),
            eps: T::from_f64(1e-3),
            momentum: T::from_f64(0.99),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let c = self.channels();
        let last = *x.shape().last().unwrap();
        if last != c {
            return Err(Error::shape(format!(
                "batchnorm expects {c} channels in the last dim, got shape {:?}",
                x.shape()
            )));
        }
        Ok(x.len() / c)
    }

    /// Normalize by batch statistics, update the moving averages, and cache
    /// what backward needs. The per-channel population size must be >= 2,
    /// otherwise the variance is identically zero and training is
    /// meaningless.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
        let (out, cache, mean, var) = self.train_math(x)?;
        let keep = self.momentum;
        let new = T::one() - keep;
        for ((mm, mv), (&m, &v)) in self
            .moving_mean
            .data_mut()
            .iter_mut()
            .zip(self.moving_var.data_mut())
            .zip(mean.iter().zip(&var))
        {
            *mm = keep * *mm + new * m;
            *mv = keep * *mv + new * v;
        }
        Ok((out, cache))
    }

    /// Training-mode math without the moving-average side effect; the
    /// gradient checker differentiates exactly this function.
    pub fn forward_frozen(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>)> {
        let (out, cache, _, _) = self.train_math(x)?;
        Ok((out, cache))
    }

    #[allow(clippy::type_complexity)]
    fn train_math(&self, x: &Tensor<T>) -> Result<(Tensor<T>, BnCache<T>, Vec<T>, Vec<T>)> {
        let c = self.channels();
        let m = self.check_input(x)?;
        if m < 2 {
            return Err(Error::DegenerateBatch(format!(
                "batchnorm needs at least 2 values per channel in training, got {m}"
            )));
        }
        let count = T::from_f64(m as f64);

        let mut mean = vec![T::zero(); c];
        for row in x.data().chunks_exact(c) {
            for (acc, &v) in mean.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
        for v in &mut mean {
            *v = *v / count;
        }

        let mut var = vec![T::zero(); c];
        for row in x.data().chunks_exact(c) {
            for ((acc, &mu), &v) in var.iter_mut().zip(&mean).zip(row) {
                let d = v - mu;
                *acc = *acc + d * d;
            }
        }
        for v in &mut var {
            *v = *v / count;
        }

        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + self.eps).sqrt()).collect();

        let mut xhat = Tensor::zeros(x.shape());
        for (row, xrow) in xhat.data_mut().chunks_exact_mut(c).zip(x.data().chunks_exact(c)) {
            for (k, out) in row.iter_mut().enumerate() {
                *out = (xrow[k] - mean[k]) * inv_std[k];
            }
        }

        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mut out = Tensor::zeros(x.shape());
        for (orow, xrow) in out.data_mut().chunks_exact_mut(c).zip(xhat.data().chunks_exact(c)) {
            for (k, o) in orow.iter_mut().enumerate() {
                *o = gamma[k] * xrow[k] + beta[k];
            }
        }

        Ok((out, BnCache { xhat, inv_std }, mean, var))
    }

    /// Inference: normalize by the moving averages.
    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let c = self.channels();
        self.check_input(x)?;
        let gamma = self.gamma.data();
        let beta = self.beta.data();
        let mean = self.moving_mean.data();
        let inv_std: Vec<T> = self
            .moving_var
            .data()
            .iter()
            .map(|&v| T::one() / (v + self.eps).sqrt())
            .collect();
        let mut out = Tensor::zeros(x.shape());
        for (orow, xrow) in out.data_mut().chunks_exact_mut(c).zip(x.data().chunks_exact(c)) {
            for (k, o) in orow.iter_mut().enumerate() {
                *o = gamma[k] * (xrow[k] - mean[k]) * inv_std[k] + beta[k];
            }
        }
        Ok(out)
    }

    /// Returns (grad wrt input, grad wrt gamma, grad wrt beta).
    ///
    /// dx folds the dependence of the batch statistics on each input:
    /// dx = gamma*inv_std * (g - mean(g) - xhat*mean(g*xhat)), with the
    /// means taken per channel over the batch.
    pub fn backward(
        &self,
        cache: &BnCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let c = self.channels();
        if grad_out.shape() != cache.xhat.shape() {
            return Err(Error::shape(format!(
                "batchnorm backward: grad shape {:?} does not match cached forward {:?}",
                grad_out.shape(),
                cache.xhat.shape()
            )));
        }
        let m = grad_out.len() / c;
        let count = T::from_f64(m as f64);

        let mut dgamma = Tensor::zeros(&[c]);
        let mut dbeta = Tensor::zeros(&[c]);
        let mut g_mean = vec![T::zero(); c];
        let mut gx_mean = vec![T::zero(); c];
        for (grow, xrow) in grad_out
            .data()
            .chunks_exact(c)
            .zip(cache.xhat.data().chunks_exact(c))
        {
            for k in 0..c {
                let g = grow[k];
                let gx = g * xrow[k];
                dbeta.data_mut()[k] = dbeta.data_mut()[k] + g;
                dgamma.data_mut()[k] = dgamma.data_mut()[k] + gx;
                g_mean[k] = g_mean[k] + g;
                gx_mean[k] = gx_mean[k] + gx;
            }
        }
        for k in 0..c {
            g_mean[k] = g_mean[k] / count;
            gx_mean[k] = gx_mean[k] / count;
        }

        let gamma = self.gamma.data();
        let mut dx = Tensor::zeros(grad_out.shape());
        for (orow, (grow, xrow)) in dx.data_mut().chunks_exact_mut(c).zip(
            grad_out
                .data()
                .chunks_exact(c)
                .zip(cache.xhat.data().chunks_exact(c)),
        ) {
            for k in 0..c {
                orow[k] =
                    gamma[k] * cache.inv_std[k] * (grow[k] - g_mean[k] - xrow[k] * gx_mean[k]);
            }
        }
        Ok((dx, dgamma, dbeta))
    }
}
