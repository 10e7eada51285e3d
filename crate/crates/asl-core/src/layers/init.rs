//! Glorot (Xavier) uniform parameter initialization.

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{uniform, Tensor};

/// Half-width of the Glorot uniform interval, sqrt(6 / (fan_in + fan_out)).
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Convolution kernel `[kh, kw, cin, cout]` with fan_in = kh*kw*cin and
/// fan_out = kh*kw*cout.
pub fn glorot_conv<T: Scalar>(
    rng: &mut Rng,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
) -> Tensor<T> {
    let l = T::from_f64(glorot_limit(kh * kw * cin, kh * kw * cout));
    uniform(rng, -l, l, &[kh, kw, cin, cout]).expect("glorot bounds")
}

/// Dense weight matrix `[fan_in, fan_out]`.
pub fn glorot_dense<T: Scalar>(rng: &mut Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let l = T::from_f64(glorot_limit(fan_in, fan_out));
    uniform(rng, -l, l, &[fan_in, fan_out]).expect("glorot bounds")
}
