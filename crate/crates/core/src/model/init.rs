//! Deterministic parameter initialisation.

use alloc::vec::Vec;

use super::{LayerParams, ModelConfig, TransformerParams};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{Scalar, Tensor2D};

fn truncated_normal_tensor<T: Scalar>(
    rng: &mut Rng,
    rows: usize,
    cols: usize,
    std: f64,
) -> Tensor2D<T> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(T::from_f64(std * rng.truncated_normal(2.0)));
    }
    Tensor2D::from_vec(rows, cols, data)
}

fn constant_row<T: Scalar>(cols: usize, value: f64) -> Tensor2D<T> {
    Tensor2D::from_vec(1, cols, alloc::vec![T::from_f64(value); cols])
}

/// Weights and embeddings drawn from a truncated normal (resampled beyond
/// two standard deviations) with `config.init_std`; biases zero; layer-norm
/// gains one. Sampling is done in f64 and cast, so the f32 and f64
/// instantiations see the same draws.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> TransformerParams<T> {
    let mut rng = Rng::derive(seed, &[0x1A17]);
    let d = config.d_model;
    let std = config.init_std;

    let embedding = truncated_normal_tensor(&mut rng, config.vocab_size, d, std);
    let positional = truncated_normal_tensor(&mut rng, config.max_seq_len, d, std);

    let mut layers = Vec::with_capacity(config.n_layers);
    for _ in 0..config.n_layers {
        layers.push(LayerParams {
            w_q: truncated_normal_tensor(&mut rng, d, d, std),
            b_q: constant_row(d, 0.0),
            w_k: truncated_normal_tensor(&mut rng, d, d, std),
            b_k: constant_row(d, 0.0),
            w_v: truncated_normal_tensor(&mut rng, d, d, std),
            b_v: constant_row(d, 0.0),
            w_o: truncated_normal_tensor(&mut rng, d, d, std),
            b_o: constant_row(d, 0.0),
            ln1_gain: constant_row(d, 1.0),
            ln1_bias: constant_row(d, 0.0),
            w1: truncated_normal_tensor(&mut rng, d, config.d_ff, std),
            b1: constant_row(config.d_ff, 0.0),
            w2: truncated_normal_tensor(&mut rng, config.d_ff, d, std),
            b2: constant_row(d, 0.0),
            ln2_gain: constant_row(d, 1.0),
            ln2_bias: constant_row(d, 0.0),
        });
    }

    TransformerParams {
        config: config.clone(),
        embedding,
        positional,
        layers,
        mlm_bias: constant_row(config.vocab_size, 0.0),
    }
}
