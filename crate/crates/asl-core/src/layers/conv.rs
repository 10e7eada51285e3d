//! 3x3 valid convolution, stride 1, NHWC, with an optional fused ReLU.
//!
//! The forward pass lowers each batch to a patch matrix (im2col) and runs
//! one matrix product per batch instead of six nested loops. The backward
//! pass reuses the patch matrix for the weight gradient and scatters the
//! patch-space gradient back to input space (col2im). Every accumulation
//! visits its terms in a fixed ascending order, so results match the naive
//! nested-loop formulation bit for bit.

use crate::error::{Error, Result};
use crate::layers::init::glorot_conv;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{gemm_acc, gemm_at_acc, transpose, Tensor};

pub struct Conv2d<T> {
    /// `[kh, kw, cin, cout]`; flattened row-major this is the `[K, cout]`
    /// matrix the patch rows multiply.
    pub weights: Tensor<T>,
    /// `[cout]`
    pub bias: Tensor<T>,
    /// Apply `max(0, .)` after the bias; the mask is cached for backward.
    pub relu: bool,
}

/// State backward needs: the patch matrix, the input geometry, and which
/// activations the ReLU kept.
pub struct ConvCache<T> {
    col: Vec<T>,
    rows: usize,
    in_shape: [usize; 4],
    keep: Option<Vec<u8>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(rng: &mut Rng, kh: usize, kw: usize, cin: usize, cout: usize, relu: bool) -> Self {
        Conv2d {
            weights: glorot_conv(rng, kh, kw, cin, cout),
            bias: Tensor::zeros(&[cout]),
            relu,
        }
    }

    fn dims(&self) -> (usize, usize, usize, usize) {
        let s = self.weights.shape();
        (s[0], s[1], s[2], s[3])
    }

    /// `[N, H, W, cin] -> [N, H-kh+1, W-kw+1, cout]`.
    pub fn out_shape(&self, in_shape: &[usize]) -> Result<[usize; 4]> {
        let (kh, kw, cin, cout) = self.dims();
        let &[n, h, w, c] = in_shape else {
            return Err(Error::shape(format!("conv input must be 4-D, got {in_shape:?}")));
        };
        if c != cin {
            return Err(Error::shape(format!(
                "conv expects {cin} input channels, got {c}"
            )));
        }
        if h < kh || w < kw {
            return Err(Error::shape(format!(
                "conv input {h}x{w} smaller than kernel {kh}x{kw}"
            )));
        }
        Ok([n, h - kh + 1, w - kw + 1, cout])
    }

    /// Patch matrix: row (n, oh, ow) holds the kh*kw*cin window at that
    /// output position. Rows of the input are contiguous in NHWC, so each
    /// patch is kh contiguous runs of kw*cin elements.
    fn im2col(&self, x: &Tensor<T>, out_shape: &[usize; 4]) -> Vec<T> {
        let (kh, kw, cin, _) = self.dims();
        let [n_batch, oh, ow, _] = *out_shape;
        let (h, w) = (x.shape()[1], x.shape()[2]);
        let k = kh * kw * cin;
        let run = kw * cin;
        let xd = x.data();
        let mut col = vec![T::zero(); n_batch * oh * ow * k];
        let mut row_start = 0;
        for n in 0..n_batch {
            for i in 0..oh {
                for j in 0..ow {
                    for ky in 0..kh {
                        let src = ((n * h + i + ky) * w + j) * cin;
                        let dst = row_start + ky * run;
                        col[dst..dst + run].copy_from_slice(&xd[src..src + run]);
                    }
                    row_start += k;
                }
            }
        }
        col
    }

    /// Convolution plus bias, before any ReLU. Returns the patch matrix too
    /// so callers that need backward state can keep it.
    fn linear_out(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Vec<T>, usize)> {
        let out_shape = self.out_shape(x.shape())?;
        let (kh, kw, cin, cout) = self.dims();
        let k = kh * kw * cin;
        let rows = out_shape[0] * out_shape[1] * out_shape[2];
        let col = self.im2col(x, &out_shape);

        // bias seeds each output row, then the patch product accumulates on top
        let mut out = Tensor::from_fn(&out_shape, |i| self.bias.data()[i % cout]);
        gemm_acc(rows, k, cout, &col, self.weights.data(), out.data_mut());
        Ok((out, col, rows))
    }

    fn forward_impl(&self, x: &Tensor<T>, keep_cache: bool) -> Result<(Tensor<T>, Option<ConvCache<T>>)> {
        let (mut out, col, rows) = self.linear_out(x)?;

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

        let cache = keep_cache.then(|| ConvCache {
            col,
            rows,
            in_shape: [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]],
            keep,
        });
        Ok((out, cache))
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>)> {
        let (out, cache) = self.forward_impl(x, true)?;
        Ok((out, cache.unwrap()))
    }

    pub fn forward_eval(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_impl(x, false)?.0)
    }

    /// Forward with the ReLU selection pinned to a previous forward's
    /// cache instead of recomputed: entries the cached pass cut stay zero,
    /// entries it kept pass through even if now negative. On the cached
    /// input this equals `forward`; under small perturbations it is the
    /// smooth function whose derivative `backward` computes, which is what
    /// finite differences must probe.
    pub fn forward_replay(&self, x: &Tensor<T>, cache: &ConvCache<T>) -> Result<Tensor<T>> {
        if *x.shape() != cache.in_shape {
            return Err(Error::shape(format!(
                "replay input {:?} does not match cached shape {:?}",
                x.shape(),
                cache.in_shape
            )));
        }
        let (mut out, _, _) = self.linear_out(x)?;
        if let Some(mask) = &cache.keep {
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
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
    ) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
        let (kh, kw, cin, cout) = self.dims();
        let k = kh * kw * cin;
        let rows = cache.rows;
        if grad_out.len() != rows * cout {
            return Err(Error::shape(format!(
                "conv backward: grad shape {:?} does not match cached forward",
                grad_out.shape()
            )));
        }

        // fused ReLU first: zero the gradient where the activation was cut
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

        let mut grad_b = Tensor::zeros(&[cout]);
        for row in g.chunks_exact(cout) {
            for (acc, &gv) in grad_b.data_mut().iter_mut().zip(row) {
                *acc = *acc + gv;
            }
        }

        let mut grad_w = Tensor::zeros(&[kh, kw, cin, cout]);
        gemm_at_acc(rows, k, cout, &cache.col, g, grad_w.data_mut());

        // patch-space gradient, then scatter-add back to input positions
        let wt = transpose(k, cout, self.weights.data());
        let mut grad_col = vec![T::zero(); rows * k];
        gemm_acc(rows, cout, k, g, &wt, &mut grad_col);

        let [n_batch, h, w, _] = cache.in_shape;
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let run = kw * cin;
        let mut grad_x = Tensor::zeros(&cache.in_shape);
        let gx = grad_x.data_mut();
        let mut row_start = 0;
        for n in 0..n_batch {
            for i in 0..oh {
                for j in 0..ow {
                    for ky in 0..kh {
                        let dst = ((n * h + i + ky) * w + j) * cin;
                        let src = row_start + ky * run;
                        for r in 0..run {
                            gx[dst + r] = gx[dst + r] + grad_col[src + r];
                        }
                    }
                    row_start += k;
                }
            }
        }
        Ok((grad_x, grad_w, grad_b))
    }
}

/// Reference formulation: six nested loops, accumulating each output in the
/// same ky, kx, cin order the patch rows use. Test oracle.
pub fn conv2d_naive<T: Scalar>(
    x: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    relu: bool,
) -> Tensor<T> {
    let (kh, kw, cin, cout) = {
        let s = weights.shape();
        (s[0], s[1], s[2], s[3])
    };
    let (n_batch, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Tensor::zeros(&[n_batch, oh, ow, cout]);
    for n in 0..n_batch {
        for i in 0..oh {
            for j in 0..ow {
                for c in 0..cout {
                    let mut acc = bias.data()[c];
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..cin {
                                acc = acc
                                    + x.at(&[n, i + ky, j + kx, ci])
                                        * weights.at(&[ky, kx, ci, c]);
                            }
                        }
                    }
                    if relu && acc < T::zero() {
                        acc = T::zero();
                    }
                    out.set(&[n, i, j, c], acc);
                }
            }
        }
    }
    out
}
