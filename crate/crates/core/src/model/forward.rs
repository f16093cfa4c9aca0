//! Forward passes with optional capture of attention internals.

use alloc::vec::Vec;

use super::{HeadCapture, LayerCapture, LayerParams, ModelCapture, ModelConfig, ModelError,
            TransformerParams};
use crate::numerics::ops::{gelu, layer_norm_in_place, softmax_rows};
use crate::numerics::tensor::{Scalar, Tensor2D};

/// Intermediate activations of one block, kept only when a backward pass
/// will follow.
#[derive(Debug, Clone)]
pub struct BlockCache<T> {
    pub x: Tensor2D<T>,
    pub q: Vec<Tensor2D<T>>,
    pub k: Vec<Tensor2D<T>>,
    pub v: Vec<Tensor2D<T>>,
    pub probs: Vec<Tensor2D<T>>,
    pub ctx: Tensor2D<T>,
    pub norm1: Tensor2D<T>,
    pub inv_std1: Vec<T>,
    pub z: Tensor2D<T>,
    pub ffn_pre: Tensor2D<T>,
    pub ffn_act: Tensor2D<T>,
    pub norm2: Tensor2D<T>,
    pub inv_std2: Vec<T>,
}

#[derive(Debug)]
pub struct BlockRun<T> {
    pub y: Tensor2D<T>,
    pub cache: Option<BlockCache<T>>,
    pub capture: Option<LayerCapture<T>>,
}

/// One post-LN encoder block: `y = LN2(z + FFN(z))`, `z = LN1(x + MHA(x))`.
pub fn run_block<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    x: &Tensor2D<T>,
    want_cache: bool,
    want_capture: bool,
) -> Result<BlockRun<T>, ModelError> {
    if x.cols() != cfg.d_model {
        return Err(ModelError::ShapeMismatch {
            what: "block input",
            expected: (x.rows(), cfg.d_model),
            got: (x.rows(), x.cols()),
        });
    }
    if x.rows() == 0 {
        return Err(ModelError::EmptySequence);
    }
    let seq = x.rows();
    let dh = cfg.d_head;
    let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));

    let mut q_full = x.matmul(&layer.w_q);
    q_full.add_row_broadcast(layer.b_q.row(0));
    let mut k_full = x.matmul(&layer.w_k);
    k_full.add_row_broadcast(layer.b_k.row(0));
    let mut v_full = x.matmul(&layer.w_v);
    v_full.add_row_broadcast(layer.b_v.row(0));

    let mut ctx = Tensor2D::<T>::zeros(seq, cfg.d_model);
    let mut heads_capture = Vec::new();
    let mut q_cache = Vec::new();
    let mut k_cache = Vec::new();
    let mut v_cache = Vec::new();
    let mut p_cache = Vec::new();

    for h in 0..cfg.n_heads {
        let lo = h * dh;
        let q = q_full.col_slice(lo, lo + dh);
        let k = k_full.col_slice(lo, lo + dh);
        let v = v_full.col_slice(lo, lo + dh);

        let mut scores = q.matmul_bt(&k);
        scores.scale(scale);
        let probs = softmax_rows(&scores);
        let ctx_h = probs.matmul(&v);
        ctx.set_col_slice(lo, &ctx_h);

        if want_capture {
            heads_capture.push(HeadCapture {
                q: q.clone(),
                k: k.clone(),
                scores,
                probs: probs.clone(),
            });
        }
        if want_cache {
            q_cache.push(q);
            k_cache.push(k);
            v_cache.push(v);
            p_cache.push(probs);
        }
    }

    let mut attn = ctx.matmul(&layer.w_o);
    attn.add_row_broadcast(layer.b_o.row(0));

    // Residual + LN1.
    let mut z = x.clone();
    z.add_assign(&attn);
    let mut norm1 = Tensor2D::<T>::zeros(if want_cache { seq } else { 0 }, cfg.d_model);
    let mut inv_std1 = Vec::new();
    layer_norm_in_place(
        &mut z,
        layer.ln1_gain.row(0),
        layer.ln1_bias.row(0),
        cfg.ln_eps,
        if want_cache { Some((&mut norm1, &mut inv_std1)) } else { None },
    );

    // Feed-forward.
    let mut ffn_pre = z.matmul(&layer.w1);
    ffn_pre.add_row_broadcast(layer.b1.row(0));
    let ffn_act = ffn_pre.map(gelu);
    let mut f = ffn_act.matmul(&layer.w2);
    f.add_row_broadcast(layer.b2.row(0));

    // Residual + LN2.
    let mut y = z.clone();
    y.add_assign(&f);
    let mut norm2 = Tensor2D::<T>::zeros(if want_cache { seq } else { 0 }, cfg.d_model);
    let mut inv_std2 = Vec::new();
    layer_norm_in_place(
        &mut y,
        layer.ln2_gain.row(0),
        layer.ln2_bias.row(0),
        cfg.ln_eps,
        if want_cache { Some((&mut norm2, &mut inv_std2)) } else { None },
    );

    let cache = if want_cache {
        Some(BlockCache {
            x: x.clone(),
            q: q_cache,
            k: k_cache,
            v: v_cache,
            probs: p_cache,
            ctx,
            norm1,
            inv_std1,
            z,
            ffn_pre,
            ffn_act,
            norm2,
            inv_std2,
        })
    } else {
        None
    };

    Ok(BlockRun {
        y,
        cache,
        capture: if want_capture { Some(LayerCapture { heads: heads_capture }) } else { None },
    })
}

/// Single-block forward with capture, for experiments on one untrained layer.
pub fn forward_block<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    x: &Tensor2D<T>,
    want_capture: bool,
) -> Result<(Tensor2D<T>, Option<LayerCapture<T>>), ModelError> {
    let run = run_block(cfg, layer, x, false, want_capture)?;
    Ok((run.y, run.capture))
}

#[derive(Debug)]
pub struct ModelOutput<T> {
    /// Hidden states at every layer boundary; entry 0 is the embedded input,
    /// entry `n_layers` the final representation.
    pub hidden: Vec<Tensor2D<T>>,
    pub capture: Option<ModelCapture<T>>,
    /// `hidden[n_layers] @ embedding^T + mlm_bias` (tied output weights).
    pub logits: Tensor2D<T>,
}

/// Full-stack forward over one token sequence.
pub fn forward_model<T: Scalar>(
    params: &TransformerParams<T>,
    tokens: &[u16],
    want_capture: bool,
) -> Result<ModelOutput<T>, ModelError> {
    let cfg = &params.config;
    if tokens.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if tokens.len() > cfg.max_seq_len {
        return Err(ModelError::SequenceTooLong { len: tokens.len(), max: cfg.max_seq_len });
    }
    let mut x = Tensor2D::<T>::zeros(tokens.len(), cfg.d_model);
    for (i, &t) in tokens.iter().enumerate() {
        if t as usize >= cfg.vocab_size {
            return Err(ModelError::TokenOutOfRange { id: t, vocab_size: cfg.vocab_size });
        }
        let emb = params.embedding.row(t as usize);
        let pos = params.positional.row(i);
        let row = x.row_mut(i);
        for ((o, &e), &p) in row.iter_mut().zip(emb).zip(pos) {
            *o = e + p;
        }
    }

    let mut hidden = Vec::with_capacity(cfg.n_layers + 1);
    let mut captures = Vec::new();
    hidden.push(x.clone());
    for layer in &params.layers {
        let run = run_block(cfg, layer, &x, false, want_capture)?;
        x = run.y;
        hidden.push(x.clone());
        if let Some(c) = run.capture {
            captures.push(c);
        }
    }

    let mut logits = x.matmul_bt(&params.embedding);
    logits.add_row_broadcast(params.mlm_bias.row(0));

    Ok(ModelOutput {
        hidden,
        capture: if want_capture { Some(ModelCapture { layers: captures }) } else { None },
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_params;
    use crate::numerics::tensor::dot_f64;
    use alloc::vec;

    fn small_cfg() -> ModelConfig {
        ModelConfig::new(2, 16, 4, 32, 40, 12).unwrap()
    }

    #[test]
    fn single_token_attention_is_trivial() {
        let cfg = small_cfg();
        let p: TransformerParams<f64> = init_params(&cfg, 3);
        let x = Tensor2D::from_vec(1, 16, (0..16).map(|i| 0.1 * i as f64).collect());
        let (_, cap) = forward_block(&cfg, &p.layers[0], &x, true).unwrap();
        for head in &cap.unwrap().heads {
            assert_eq!(head.probs.rows(), 1);
            assert!((head.probs.get(0, 0) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn captured_q_matches_projection() {
        let cfg = small_cfg();
        let p: TransformerParams<f64> = init_params(&cfg, 4);
        let x = {
            let mut rng = crate::numerics::rng::Rng::new(9);
            crate::numerics::ops::gaussian_matrix(&mut rng, 6, 16, 0.0, 1.0)
        };
        let layer = &p.layers[0];
        let (_, cap) = forward_block(&cfg, layer, &x, true).unwrap();
        let cap = cap.unwrap();
        for (h, head) in cap.heads.iter().enumerate() {
            let lo = h * cfg.d_head;
            for i in 0..x.rows() {
                for j in 0..cfg.d_head {
                    let mut want = layer.b_q.get(0, lo + j);
                    for c in 0..cfg.d_model {
                        want += x.get(i, c) * layer.w_q.get(c, lo + j);
                    }
                    assert!((head.q.get(i, j) - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn scores_recompute_from_captured_qk() {
        let cfg = small_cfg();
        let p: TransformerParams<f64> = init_params(&cfg, 5);
        let mut rng = crate::numerics::rng::Rng::new(2);
        let x = crate::numerics::ops::gaussian_matrix(&mut rng, 8, 16, 0.0, 0.5);
        let (_, cap) = forward_block(&cfg, &p.layers[0], &x, true).unwrap();
        let scale = 1.0 / libm::sqrt(cfg.d_head as f64);
        for head in &cap.unwrap().heads {
            for i in 0..8 {
                for j in 0..8 {
                    let want = dot_f64(head.q.row(i), head.k.row(j)) * scale;
                    assert!((head.scores.get(i, j) - want).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn mean_query_equals_projected_mean_input() {
        // Linearity of the projection: mean over positions of Q equals
        // W_Q applied to the mean input row, plus the bias.
        let cfg = small_cfg();
        let mut p: TransformerParams<f64> = init_params(&cfg, 6);
        // Nonzero bias to exercise the affine part.
        for v in p.layers[0].b_q.data_mut() {
            *v = 0.03;
        }
        let mut rng = crate::numerics::rng::Rng::new(13);
        let x = crate::numerics::ops::gaussian_matrix(&mut rng, 32, 16, 0.1, 0.7);
        let layer = &p.layers[0];
        let (_, cap) = forward_block(&cfg, layer, &x, true).unwrap();
        let xbar = x.col_means_f64();
        for (h, head) in cap.unwrap().heads.iter().enumerate() {
            let qbar = head.q.col_means_f64();
            let lo = h * cfg.d_head;
            for j in 0..cfg.d_head {
                let mut want = layer.b_q.get(0, lo + j);
                for c in 0..cfg.d_model {
                    want += xbar[c] * layer.w_q.get(c, lo + j);
                }
                assert!((qbar[j] - want).abs() < 1e-5, "head {h} dim {j}");
            }
        }
    }

    #[test]
    fn attention_rows_sum_to_one() {
        let cfg = small_cfg();
        let p: TransformerParams<f32> = init_params(&cfg, 8);
        let out = forward_model(&p, &[1, 5, 9, 2, 2, 30], true).unwrap();
        for layer in &out.capture.unwrap().layers {
            for head in &layer.heads {
                for i in 0..head.probs.rows() {
                    let s: f64 = head.probs.row(i).iter().map(|&v| v as f64).sum();
                    assert!((s - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn zero_depth_model_is_embedding_similarity() {
        let cfg = ModelConfig::new(0, 16, 4, 32, 40, 12).unwrap();
        let p: TransformerParams<f64> = init_params(&cfg, 1);
        let out = forward_model(&p, &[3, 7], false).unwrap();
        assert_eq!(out.hidden.len(), 1);
        // logits[i][v] = (emb[t_i] + pos[i]) . emb[v]
        for (i, &t) in [3u16, 7u16].iter().enumerate() {
            for v in 0..cfg.vocab_size {
                let mut want = 0.0;
                for c in 0..cfg.d_model {
                    want += (p.embedding.get(t as usize, c) + p.positional.get(i, c))
                        * p.embedding.get(v, c);
                }
                assert!((out.logits.get(i, v) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = small_cfg();
        let p: TransformerParams<f32> = init_params(&cfg, 21);
        let a = forward_model(&p, &[0, 1, 2, 3], false).unwrap();
        let b = forward_model(&p, &[0, 1, 2, 3], false).unwrap();
        assert_eq!(a.logits.data(), b.logits.data());
        assert_eq!(a.hidden[2].data(), b.hidden[2].data());
    }

    #[test]
    fn layers_compose() {
        // Re-running each layer on the recorded hidden state reproduces the
        // next hidden state.
        let cfg = small_cfg();
        let p: TransformerParams<f64> = init_params(&cfg, 30);
        let out = forward_model(&p, &[5, 6, 7, 8, 9], false).unwrap();
        for (l, layer) in p.layers.iter().enumerate() {
            let (y, _) = forward_block(&cfg, layer, &out.hidden[l], false).unwrap();
            for (a, b) in y.data().iter().zip(out.hidden[l + 1].data()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let cfg = small_cfg();
        let p: TransformerParams<f32> = init_params(&cfg, 2);
        assert!(matches!(
            forward_model(&p, &[100], false),
            Err(ModelError::TokenOutOfRange { .. })
        ));
        assert!(matches!(
            forward_model(&p, &[0u16; 13], false),
            Err(ModelError::SequenceTooLong { .. })
        ));
        assert!(matches!(forward_model(&p, &[], false), Err(ModelError::EmptySequence)));
        let bad = Tensor2D::<f32>::zeros(4, 8);
        assert!(matches!(
            forward_block(&cfg, &p.layers[0], &bad, false),
            Err(ModelError::ShapeMismatch { .. })
        ));
    }
}
