//! 2x2 max pooling with stride 2, NHWC.
//!
//! Odd trailing rows or columns are dropped. Ties inside a window resolve
//! to the first occurrence in row-major order, and the winning position is
//! cached so backward routes the gradient to exactly that element.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub struct MaxPool2x2;

pub struct PoolCache {
    /// flat input index of each output's argmax
    argmax: Vec<u32>,
    in_shape: [usize; 4],
}

impl MaxPool2x2 {
    pub fn out_shape(in_shape: &[usize]) -> Result<[usize; 4]> {
        let &[n, h, w, c] = in_shape else {
            return Err(Error::shape(format!("pool input must be 4-D, got {in_shape:?}")));
        };
        if h < 2 || w < 2 {
            return Err(Error::shape(format!(
                "pool input {h}x{w} smaller than the 2x2 window"
            )));
        }
        Ok([n, h / 2, w / 2, c])
    }

    pub fn forward<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, PoolCache)> {
        let out_shape = Self::out_shape(x.shape())?;
        let [nb, oh, ow, c] = out_shape;
        let (h, w) = (x.shape()[1], x.shape()[2]);
        debug_assert!(x.len() < u32::MAX as usize);
        let xd = x.data();
        let mut out = Tensor::zeros(&out_shape);
        let mut argmax = vec![0u32; out.len()];
        let od = out.data_mut();
        let mut o = 0;
        for n in 0..nb {
            for i in 0..oh {
                for j in 0..ow {
                    for k in 0..c {
                        let base = ((n * h + 2 * i) * w + 2 * j) * c + k;
                        let cands = [base, base + c, base + w * c, base + w * c + c];
                        let mut best = cands[0];
                        let mut best_v = xd[best];
                        for &idx in &cands[1..] {
                            if xd[idx] > best_v {
                                best_v = xd[idx];
                                best = idx;
                            }
                        }
                        od[o] = best_v;
                        argmax[o] = best as u32;
                        o += 1;
                    }
                }
            }
        }
        Ok((
            out,
            PoolCache {
                argmax,
                in_shape: [nb, h, w, c],
            },
        ))
    }

    /// Forward with the window selection pinned to a previous forward's
    /// cache: each output reads the cached argmax position instead of
    /// re-scanning its window. On the cached input this equals `forward`;
    /// under small perturbations it is the smooth function whose derivative
    /// `backward` computes, which is what finite differences must probe.
    pub fn forward_replay<T: Scalar>(x: &Tensor<T>, cache: &PoolCache) -> Result<Tensor<T>> {
        if *x.shape() != cache.in_shape {
            return Err(Error::shape(format!(
                "replay input {:?} does not match cached shape {:?}",
                x.shape(),
                cache.in_shape
            )));
        }
        let out_shape = Self::out_shape(x.shape())?;
        let xd = x.data();
        let mut out = Tensor::zeros(&out_shape);
        for (o, &idx) in out.data_mut().iter_mut().zip(&cache.argmax) {
            *o = xd[idx as usize];
        }
        Ok(out)
    }

    pub fn backward<T: Scalar>(cache: &PoolCache, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
        if grad_out.len() != cache.argmax.len() {
            return Err(Error::shape(format!(
                "pool backward: grad shape {:?} does not match cached forward",
                grad_out.shape()
            )));
        }
        let mut grad_x = Tensor::zeros(&cache.in_shape);
        let gx = grad_x.data_mut();
        for (&idx, &g) in cache.argmax.iter().zip(grad_out.data()) {
            gx[idx as usize] = gx[idx as usize] + g;
        }
        Ok(grad_x)
    }
}

/// Reference formulation scanning each window directly. Test oracle.
pub fn maxpool2x2_naive<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let [n_batch, oh, ow, c] = MaxPool2x2::out_shape(x.shape()).unwrap();
    let mut out = Tensor::zeros(&[n_batch, oh, ow, c]);
    for n in 0..n_batch {
        for i in 0..oh {
            for j in 0..ow {
                for k in 0..c {
                    let mut best = x.at(&[n, 2 * i, 2 * j, k]);
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let v = x.at(&[n, 2 * i + dy, 2 * j + dx, k]);
                        if v > best {
                            best = v;
                        }
                    }
                    out.set(&[n, i, j, k], best);
                }
            }
        }
    }
    out
}
