//! Dense tensors and the primitives every layer builds on.
//!
//! Tensors are row-major with up to four dimensions; image batches use NHWC
//! layout. All arithmetic is plain IEEE in a fixed order, so every operation
//! is bitwise reproducible for a fixed input.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Dense n-dimensional array, row-major, 1-4 dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn validate_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > 4 {
        return Err(Error::shape(format!(
            "tensor rank must be 1-4, got shape {shape:?}"
        )));
    }
    if shape.iter().any(|&d| d == 0) {
        return Err(Error::shape(format!("tensor dims must be >= 1, got {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = validate_shape(shape)?;
        if data.len() != len {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let len = validate_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let len = validate_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = validate_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Element at a multi-index; test and glue code convenience.
    pub fn at(&self, idx: &[usize]) -> T {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    fn offset(&self, idx: &[usize]) -> usize {
        assert_eq!(idx.len(), self.shape.len(), "index rank mismatch");
        let mut off = 0;
        for (i, (&ix, &dim)) in idx.iter().zip(&self.shape).enumerate() {
            assert!(ix < dim, "index {ix} out of bounds for dim {i} ({dim})");
            off = off * dim + ix;
        }
        off
    }

    /// Same data, new shape; element count must match.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len = validate_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} ({} elems) to {shape:?} ({len} elems)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(&self, other: &Self, op_name: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "{op_name}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Saturate every entry into `[lo, hi]`.
    pub fn clip(&self, lo: T, hi: T) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::param(format!("clip: lo {lo} > hi {hi}")));
        }
        Ok(self.map(|x| {
            if x < lo {
                lo
            } else if x > hi {
                hi
            } else {
                x
            }
        }))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "add_assign: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b;
        }
        Ok(())
    }

    /// Standard matrix product of two 2-D tensors.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (&[m, k], &[k2, n]) = (&self.shape[..], &other.shape[..]) else {
            return Err(Error::shape(format!(
                "matmul needs 2-D operands, got {:?} x {:?}",
                self.shape, other.shape
            )));
        };
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul inner dims differ: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = Tensor::zeros(&[m, n]);
        gemm_acc(m, k, n, &self.data, &other.data, &mut out.data);
        Ok(out)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Lossless-as-possible precision conversion (used by the gradient suite).
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }
}

/// `out[m x n] += a[m x k] . b[k x n]`.
///
/// Four output rows are produced per pass so each row of `b` is loaded once
/// per group instead of once per row, and the inner loop vectorizes over
/// `j`. Every `out[i][j]` still accumulates its `k` terms in ascending
/// order, so the result is bit-for-bit the naive triple loop's.
pub(crate) fn gemm_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let a0 = &a[i * k..][..k];
        let a1 = &a[(i + 1) * k..][..k];
        let a2 = &a[(i + 2) * k..][..k];
        let a3 = &a[(i + 3) * k..][..k];
        let (o01, o23) = out[i * n..(i + 4) * n].split_at_mut(2 * n);
        let (o0, o1) = o01.split_at_mut(n);
        let (o2, o3) = o23.split_at_mut(n);
        for kk in 0..k {
            let (v0, v1, v2, v3) = (a0[kk], a1[kk], a2[kk], a3[kk]);
            let b_row = &b[kk * n..][..n];
            for j in 0..n {
                let bv = b_row[j];
                o0[j] = o0[j] + v0 * bv;
                o1[j] = o1[j] + v1 * bv;
                o2[j] = o2[j] + v2 * bv;
                o3[j] = o3[j] + v3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let a_row = &a[i * k..][..k];
        let o = &mut out[i * n..][..n];
        for (&aik, b_row) in a_row.iter().zip(b.chunks_exact(n)) {
            for (ov, &bv) in o.iter_mut().zip(b_row) {
                *ov = *ov + aik * bv;
            }
        }
        i += 1;
    }
}

/// `out[k x n] += transpose(a[m x k]) . b[m x n]`.
///
/// Each output entry sums its `m` terms in ascending row order. Small
/// outputs accumulate in place as rank-1 updates; when the output exceeds
/// cache, rows of `a` are transposed in 64-row tiles and multiplied with
/// [`gemm_acc`], which visits the same terms in the same order.
pub(crate) fn gemm_at_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], out: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    if k * n * std::mem::size_of::<T>() <= 64 * 1024 {
        for (a_row, b_row) in a.chunks_exact(k).zip(b.chunks_exact(n)) {
            for (&aik, out_row) in a_row.iter().zip(out.chunks_exact_mut(n)) {
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o = *o + aik * bv;
                }
            }
        }
        return;
    }
    const TM: usize = 64;
    let mut at_tile = vec![T::zero(); TM.min(m) * k];
    let mut i0 = 0;
    while i0 < m {
        let tm = TM.min(m - i0);
        for r in 0..tm {
            let a_row = &a[(i0 + r) * k..][..k];
            for (kk, &v) in a_row.iter().enumerate() {
                at_tile[kk * tm + r] = v;
            }
        }
        gemm_acc(k, tm, n, &at_tile[..tm * k], &b[i0 * n..][..tm * n], out);
        i0 += tm;
    }
}

/// Row-major transpose of `a[rows x cols]`.
pub(crate) fn transpose<T: Scalar>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Tensor of i.i.d. uniform draws on `[lo, hi)`.
pub fn uniform<T: Scalar>(rng: &mut Rng, lo: T, hi: T, shape: &[usize]) -> Result<Tensor<T>> {
    validate_shape(shape)?;
    if !(lo < hi) {
        return Err(Error::param(format!("uniform: lo {lo} must be < hi {hi}")));
    }
    let span = hi - lo;
    Ok(Tensor::from_fn(shape, |_| {
        let v = lo + span * T::from_f64(rng.next_f64());
        // rounding can land exactly on hi; keep the interval half-open
        if v >= hi {
            hi.next_down()
        } else {
            v
        }
    }))
}

/// Tensor of i.i.d. normal draws with the given mean and standard deviation.
pub fn gaussian<T: Scalar>(rng: &mut Rng, mean: T, std: T, shape: &[usize]) -> Result<Tensor<T>> {
    validate_shape(shape)?;
    if std < T::zero() {
        return Err(Error::param(format!("gaussian: std {std} must be >= 0")));
    }
    Ok(Tensor::from_fn(shape, |_| {
        mean + std * T::from_f64(rng.next_gaussian())
    }))
}
