//! Loss and exact gradients for the fixed encoder architecture.
//!
//! The loss is mean cross-entropy over masked positions only. Gradients are
//! derived by hand, layer by layer, and include both contributions of the
//! tied embedding table (input lookup and output projection). Verified
//! against central finite differences in the acceptance suite.


use alloc::vec::Vec;

use super::{MaskedBatch, TrainError, IGNORE_LABEL};
use crate::model::{BlockCache, LayerParams, ModelConfig, TransformerParams};
use crate::model::run_block;
use crate::numerics::ops::gelu_grad;
use crate::numerics::tensor::{Scalar, Tensor2D};

/// Mean masked cross-entropy and a same-shaped gradient set.
pub fn loss_and_grads<T: Scalar>(
    params: &TransformerParams<T>,
    batch: &MaskedBatch,
) -> Result<(f64, TransformerParams<T>), TrainError> {
    let cfg = &params.config;
    let mut grads = params.zeros_like();
    let mut loss_sum = 0.0f64;
    let mut n_masked = 0usize;

    for s in 0..batch.input.n_seqs {
        let tokens = batch.input.seq(s);
        let labels = batch.labels_for(s);
        if labels.iter().all(|&l| l == IGNORE_LABEL) {
            continue;
        }
        n_masked += labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
        loss_sum += sequence_backward(cfg, params, tokens, labels, &mut grads)?;
    }

    if n_masked == 0 {
        return Err(TrainError::NoMaskedPositions);
    }
    let inv = T::from_f64(1.0 / n_masked as f64);
    for i in 0..grads.n_tensors() {
        grads.tensor_mut(i).scale(inv);
    }
    Ok((loss_sum / n_masked as f64, grads))
}

/// Accumulates unscaled gradients for one sequence; returns the summed
/// cross-entropy over its masked positions.
fn sequence_backward<T: Scalar>(
    cfg: &ModelConfig,
    params: &TransformerParams<T>,
    tokens: &[u16],
    labels: &[u16],
    grads: &mut TransformerParams<T>,
) -> Result<f64, TrainError> {
    let seq = tokens.len();

    // Forward with caches.
    let mut x = embed(params, tokens)?;
    let mut caches: Vec<BlockCache<T>> = Vec::with_capacity(cfg.n_layers);
    for layer in &params.layers {
        let run = run_block(cfg, layer, &x, true, false)?;
        x = run.y;
        caches.push(run.cache.unwrap());
    }
    let final_hidden = x;
    let mut logits = final_hidden.matmul_bt(&params.embedding);
    logits.add_row_broadcast(params.mlm_bias.row(0));

    // Cross-entropy on masked rows; dlogits = softmax - onehot there,
    // zero elsewhere. Loss terms are computed with f64 log-sum-exp.
    let vocab = cfg.vocab_size;
    let mut dlogits = Tensor2D::<T>::zeros(seq, vocab);
    let mut loss_sum = 0.0f64;
    for i in 0..seq {
        let label = labels[i];
        if label == IGNORE_LABEL {
            continue;
        }
        let row = logits.row(i);
        let mut max = f64::NEG_INFINITY;
        for &v in row {
            max = max.max(v.to_f64());
        }
        let mut denom = 0.0f64;
        for &v in row {
            denom += libm::exp(v.to_f64() - max);
        }
        let log_denom = libm::log(denom);
        loss_sum += log_denom - (row[label as usize].to_f64() - max);

        let drow = dlogits.row_mut(i);
        for (d, &v) in drow.iter_mut().zip(row) {
            *d = T::from_f64(libm::exp(v.to_f64() - max - log_denom));
        }
        drow[label as usize] = drow[label as usize] - T::one();
    }

    // Output head: logits = h E^T + b. Tied-weight contribution to E.
    let mut dh = dlogits.matmul(&params.embedding);
    grads.embedding.add_assign(&dlogits.matmul_at(&final_hidden));
    add_col_sums(&mut grads.mlm_bias, &dlogits);

    // Blocks, top down.
    for (layer_idx, layer) in params.layers.iter().enumerate().rev() {
        let cache = &caches[layer_idx];
        dh = backward_block(cfg, layer, cache, &dh, &mut grads.layers[layer_idx]);
    }

    // Embedding lookup and positional table.
    for (i, &t) in tokens.iter().enumerate() {
        let drow = dh.row(i);
        let erow = grads.embedding.row_mut(t as usize);
        for (e, &d) in erow.iter_mut().zip(drow) {
            *e = *e + d;
        }
        let prow = grads.positional.row_mut(i);
        for (p, &d) in prow.iter_mut().zip(drow) {
            *p = *p + d;
        }
    }

    Ok(loss_sum)
}

pub(crate) fn embed<T: Scalar>(
    params: &TransformerParams<T>,
    tokens: &[u16],
) -> Result<Tensor2D<T>, TrainError> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(crate::model::ModelError::EmptySequence.into());
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(crate::model::ModelError::SequenceTooLong {
            len: tokens.len(),
            max: cfg.max_seq_len,
        }
        .into());
    }
    let mut x = Tensor2D::<T>::zeros(tokens.len(), cfg.d_model);
    for (i, &t) in tokens.iter().enumerate() {
        if t as usize >= cfg.vocab_size {
            return Err(crate::model::ModelError::TokenOutOfRange {
                id: t,
                vocab_size: cfg.vocab_size,
            }
            .into());
        }
        let emb = params.embedding.row(t as usize);
        let pos = params.positional.row(i);
        for ((o, &e), &p) in x.row_mut(i).iter_mut().zip(emb).zip(pos) {
            *o = e + p;
        }
    }
    Ok(x)
}

/// Backward through one post-LN block; returns the gradient with respect to
/// the block input.
fn backward_block<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    cache: &BlockCache<T>,
    dy: &Tensor2D<T>,
    g: &mut LayerParams<T>,
) -> Tensor2D<T> {
    let seq = dy.rows();
    let dh = cfg.d_head;
    let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));

    // LN2.
    let dv = layer_norm_backward(
        dy,
        &cache.norm2,
        &cache.inv_std2,
        layer.ln2_gain.row(0),
        &mut g.ln2_gain,
        &mut g.ln2_bias,
    );

    // Feed-forward: v = z + gelu(z W1 + b1) W2 + b2.
    g.w2.add_assign(&cache.ffn_act.matmul_at(&dv));
    add_col_sums(&mut g.b2, &dv);
    let mut dffn_pre = dv.matmul_bt(&layer.w2);
    for (d, &pre) in dffn_pre.data_mut().iter_mut().zip(cache.ffn_pre.data()) {
        *d = *d * gelu_grad(pre);
    }
    g.w1.add_assign(&cache.z.matmul_at(&dffn_pre));
    add_col_sums(&mut g.b1, &dffn_pre);
    let mut dz = dffn_pre.matmul_bt(&layer.w1);
    dz.add_assign(&dv);

    // LN1.
    let du = layer_norm_backward(
        &dz,
        &cache.norm1,
        &cache.inv_std1,
        layer.ln1_gain.row(0),
        &mut g.ln1_gain,
        &mut g.ln1_bias,
    );

    // Attention output projection.
    g.w_o.add_assign(&cache.ctx.matmul_at(&du));
    add_col_sums(&mut g.b_o, &du);
    let dctx = du.matmul_bt(&layer.w_o);

    // Heads.
    let mut dq_full = Tensor2D::<T>::zeros(seq, cfg.d_model);
    let mut dk_full = Tensor2D::<T>::zeros(seq, cfg.d_model);
    let mut dv_full = Tensor2D::<T>::zeros(seq, cfg.d_model);
    for h in 0..cfg.n_heads {
        let lo = h * dh;
        let dctx_h = dctx.col_slice(lo, lo + dh);
        let dp = dctx_h.matmul_bt(&cache.v[h]);
        let dvh = cache.probs[h].matmul_at(&dctx_h);
        let ds = softmax_backward(&cache.probs[h], &dp);
        let mut dqh = ds.matmul(&cache.k[h]);
        dqh.scale(scale);
        let mut dkh = ds.matmul_at(&cache.q[h]);
        dkh.scale(scale);
        dq_full.set_col_slice(lo, &dqh);
        dk_full.set_col_slice(lo, &dkh);
        dv_full.set_col_slice(lo, &dvh);
    }

    // Input projections; residual adds the straight-through path.
    g.w_q.add_assign(&cache.x.matmul_at(&dq_full));
    add_col_sums(&mut g.b_q, &dq_full);
    g.w_k.add_assign(&cache.x.matmul_at(&dk_full));
    add_col_sums(&mut g.b_k, &dk_full);
    g.w_v.add_assign(&cache.x.matmul_at(&dv_full));
    add_col_sums(&mut g.b_v, &dv_full);

    let mut dx = dq_full.matmul_bt(&layer.w_q);
    dx.add_assign(&dk_full.matmul_bt(&layer.w_k));
    dx.add_assign(&dv_full.matmul_bt(&layer.w_v));
    dx.add_assign(&du);
    dx
}

/// Backward of row-wise layer norm. `norm` holds the standardized rows,
/// `inv_std` the per-row reciprocal standard deviations. Accumulates the
/// gain/bias gradients and returns the input gradient.
fn layer_norm_backward<T: Scalar>(
    dy: &Tensor2D<T>,
    norm: &Tensor2D<T>,
    inv_std: &[T],
    gain: &[T],
    g_gain: &mut Tensor2D<T>,
    g_bias: &mut Tensor2D<T>,
) -> Tensor2D<T> {
    let d = dy.cols();
    let inv_d = T::from_f64(1.0 / d as f64);
    let mut dx = Tensor2D::<T>::zeros(dy.rows(), d);
    let g_gain_row = g_gain.row_mut(0);
    let g_bias_row = g_bias.row_mut(0);
    for r in 0..dy.rows() {
        let dyr = dy.row(r);
        let ur = norm.row(r);
        let mut m1 = T::zero();
        let mut m2 = T::zero();
        for j in 0..d {
            g_gain_row[j] = g_gain_row[j] + dyr[j] * ur[j];
            g_bias_row[j] = g_bias_row[j] + dyr[j];
            let dhat = dyr[j] * gain[j];
            m1 = m1 + dhat;
            m2 = m2 + dhat * ur[j];
        }
        m1 = m1 * inv_d;
        m2 = m2 * inv_d;
        let is = inv_std[r];
        let dxr = dx.row_mut(r);
        for j in 0..d {
            let dhat = dyr[j] * gain[j];
            dxr[j] = is * (dhat - m1 - ur[j] * m2);
        }
    }
    dx
}

/// Backward of row-wise softmax: `ds = p * (dp - sum(dp * p))` per row.
fn softmax_backward<T: Scalar>(probs: &Tensor2D<T>, dprobs: &Tensor2D<T>) -> Tensor2D<T> {
    let cols = probs.cols();
    let mut ds = Tensor2D::<T>::zeros(probs.rows(), cols);
    for r in 0..probs.rows() {
        let p = probs.row(r);
        let dp = dprobs.row(r);
        let mut dot = T::zero();
        for j in 0..cols {
            dot = dot + p[j] * dp[j];
        }
        let out = ds.row_mut(r);
        for j in 0..cols {
            out[j] = p[j] * (dp[j] - dot);
        }
    }
    ds
}

fn add_col_sums<T: Scalar>(acc: &mut Tensor2D<T>, m: &Tensor2D<T>) {
    let sums = m.col_sums();
    for (a, &s) in acc.row_mut(0).iter_mut().zip(&sums) {
        *a = *a + s;
    }
}
