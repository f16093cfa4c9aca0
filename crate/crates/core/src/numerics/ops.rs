//! Elementwise and row-wise kernels: sampling, softmax, layer norm, GELU.

use alloc::vec::Vec;

use super::rng::Rng;
use super::tensor::{Scalar, Tensor2D};

/// Matrix of i.i.d. normal entries, deterministic given the generator state.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize, mean: f64, std: f64) -> Tensor2D<f64> {
    assert!(std >= 0.0, "negative std");
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(mean + std * rng.normal());
    }
    Tensor2D::from_vec(rows, cols, data)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(x: &Tensor2D<T>) -> Tensor2D<T> {
    let mut out = x.clone();
    softmax_rows_in_place(&mut out);
    out
}

pub fn softmax_rows_in_place<T: Scalar>(x: &mut Tensor2D<T>) {
    let cols = x.cols();
    for row in x.data_mut().chunks_exact_mut(cols) {
        let mut max = T::neg_infinity();
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
}

/// Row-wise layer normalisation: standardise each row (biased variance,
/// `eps` inside the square root), then apply the per-column affine.
pub fn layer_norm<T: Scalar>(x: &Tensor2D<T>, gain: &[T], bias: &[T], eps: f64) -> Tensor2D<T> {
    assert_eq!(gain.len(), x.cols(), "gain length");
    assert_eq!(bias.len(), x.cols(), "bias length");
    let mut out = x.clone();
    layer_norm_in_place(&mut out, gain, bias, eps, None);
    out
}

/// In-place layer norm; optionally records `(normalized_row, inv_std)` pairs
/// needed by the backward pass.
pub(crate) fn layer_norm_in_place<T: Scalar>(
    x: &mut Tensor2D<T>,
    gain: &[T],
    bias: &[T],
    eps: f64,
    mut cache: Option<(&mut Tensor2D<T>, &mut Vec<T>)>,
) {
    let cols = x.cols();
    let inv_n = T::from_f64(1.0 / cols as f64);
    let eps = T::from_f64(eps);
    for (i, row) in x.data_mut().chunks_exact_mut(cols).enumerate() {
        let mut mean = T::zero();
        for &v in row.iter() {
            mean = mean + v;
        }
        mean = mean * inv_n;
        let mut var = T::zero();
        for &v in row.iter() {
            let d = v - mean;
            var = var + d * d;
        }
        var = var * inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        if let Some((norm, stds)) = cache.as_mut() {
            let nrow = norm.row_mut(i);
            for (n, &v) in nrow.iter_mut().zip(row.iter()) {
                *n = (v - mean) * inv_std;
            }
            stds.push(inv_std);
        }
        for ((v, &g), &b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv_std * g + b;
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044715;

/// Tanh-form GELU (the variant used by the reference encoder family).
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let inner = c * (x + a * x * x * x);
    half * x * (T::one() + inner.tanh())
}

/// Derivative of [`gelu`].
#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C);
    let a = T::from_f64(GELU_A);
    let half = T::from_f64(0.5);
    let three = T::from_f64(3.0);
    let inner = c * (x + a * x * x * x);
    let t = inner.tanh();
    let sech2 = T::one() - t * t;
    half * (T::one() + t) + half * x * sech2 * c * (T::one() + three * a * x * x)
}
