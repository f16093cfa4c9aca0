//! Bias-corrected Adam.

use alloc::vec::Vec;

use crate::model::TransformerParams;
use crate::numerics::tensor::{Scalar, Tensor2D};

/// First/second moment estimates, one tensor per parameter tensor, plus the
/// update counter used for bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor2D<T>>,
    pub v: Vec<Tensor2D<T>>,
    pub t: usize,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &TransformerParams<T>) -> Self {
        let mut m = Vec::with_capacity(params.n_tensors());
        for i in 0..params.n_tensors() {
            let t = params.tensor(i);
            m.push(Tensor2D::zeros(t.rows(), t.cols()));
        }
        Self { v: m.clone(), m, t: 0 }
    }
}

/// One elementwise Adam update. Increments the state's step counter.
pub fn adam_step<T: Scalar>(
    params: &mut TransformerParams<T>,
    grads: &TransformerParams<T>,
    state: &mut AdamState<T>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 / (1.0 - libm::pow(beta1, t as f64));
    let c2 = 1.0 / (1.0 - libm::pow(beta2, t as f64));
    let b1 = T::from_f64(beta1);
    let b2 = T::from_f64(beta2);
    let one_m_b1 = T::from_f64(1.0 - beta1);
    let one_m_b2 = T::from_f64(1.0 - beta2);
    let c1 = T::from_f64(c1);
    let c2 = T::from_f64(c2);
    let lr = T::from_f64(lr);
    let eps = T::from_f64(eps);

    for i in 0..params.n_tensors() {
        let g = grads.tensor(i).data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.tensor_mut(i).data_mut();
        for j in 0..p.len() {
            let gj = g[j];
            m[j] = b1 * m[j] + one_m_b1 * gj;
            v[j] = b2 * v[j] + one_m_b2 * gj * gj;
            let m_hat = m[j] * c1;
            let v_hat = v[j] * c2;
            p[j] = p[j] - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}
