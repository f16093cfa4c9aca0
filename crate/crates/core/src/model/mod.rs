//! A minimal BERT-style transformer encoder with full internal capture.
//!
//! Post-LN residual blocks, tanh-GELU feed-forward, learned absolute
//! positional embeddings, and a weight-tied masked-token head. No dropout,
//! no padding/masking: every sequence in a batch has the same length.

mod forward;
mod init;

pub use forward::{forward_block, forward_model, run_block, BlockCache, BlockRun, ModelOutput};
pub use init::init_params;

use alloc::vec::Vec;

use crate::numerics::tensor::{Scalar, Tensor2D};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelError {
    BadConfig(&'static str),
    ShapeMismatch { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    TokenOutOfRange { id: u16, vocab_size: usize },
    SequenceTooLong { len: usize, max: usize },
    EmptySequence,
}

impl core::fmt::Display for ModelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ModelError::BadConfig(msg) => write!(f, "invalid model config: {msg}"),
            ModelError::ShapeMismatch { what, expected, got } => {
                write!(f, "{what}: expected {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)
            }
            ModelError::TokenOutOfRange { id, vocab_size } => {
                write!(f, "token id {id} out of range for vocab {vocab_size}")
            }
            ModelError::SequenceTooLong { len, max } => {
                write!(f, "sequence length {len} exceeds max {max}")
            }
            ModelError::EmptySequence => write!(f, "empty token sequence"),
        }
    }
}

impl core::error::Error for ModelError {}

/// Shape and initialisation hyperparameters of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn new(
        n_layers: usize,
        d_model: usize,
        n_heads: usize,
        d_ff: usize,
        vocab_size: usize,
        max_seq_len: usize,
    ) -> Result<Self, ModelError> {
        if d_model == 0 || n_heads == 0 || d_ff == 0 || vocab_size == 0 || max_seq_len == 0 {
            return Err(ModelError::BadConfig("all dimensions must be >= 1"));
        }
        if !d_model.is_multiple_of(n_heads) {
            return Err(ModelError::BadConfig("d_model must be divisible by n_heads"));
        }
        Ok(Self {
            n_layers,
            d_model,
            n_heads,
            d_head: d_model / n_heads,
            d_ff,
            vocab_size,
            max_seq_len,
            init_std: 0.02,
            ln_eps: 1e-12,
        })
    }

    /// The 12-layer, 768-wide encoder shape used as the default block under
    /// bias injection.
    pub fn bert_base() -> Self {
        Self::new(12, 768, 12, 3072, 30_522, 512).unwrap()
    }

    /// Reference toy shape for the training-dynamics experiments.
    pub fn toy() -> Self {
        Self::new(2, 64, 4, 256, crate::train::VOCAB_SIZE, 64).unwrap()
    }

    pub fn with_layers(mut self, n_layers: usize) -> Self {
        self.n_layers = n_layers;
        self
    }
}

/// Parameters of one encoder layer. Attention projections keep the full
/// `d_model x d_model` form; head `h` owns the column slice
/// `[h*d_head, (h+1)*d_head)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub w_q: Tensor2D<T>,
    pub b_q: Tensor2D<T>,
    pub w_k: Tensor2D<T>,
    pub b_k: Tensor2D<T>,
    pub w_v: Tensor2D<T>,
    pub b_v: Tensor2D<T>,
    pub w_o: Tensor2D<T>,
    pub b_o: Tensor2D<T>,
    pub ln1_gain: Tensor2D<T>,
    pub ln1_bias: Tensor2D<T>,
    pub w1: Tensor2D<T>,
    pub b1: Tensor2D<T>,
    pub w2: Tensor2D<T>,
    pub b2: Tensor2D<T>,
    pub ln2_gain: Tensor2D<T>,
    pub ln2_bias: Tensor2D<T>,
}

/// Tensors named per layer, in the fixed serialisation order.
pub const LAYER_TENSOR_NAMES: [&str; 16] = [
    "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o", "ln1_gain", "ln1_bias", "w1", "b1",
    "w2", "b2", "ln2_gain", "ln2_bias",
];

/// Full parameter set: embeddings, per-layer weights, and the tied
/// masked-token output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams<T> {
    pub config: ModelConfig,
    pub embedding: Tensor2D<T>,
    pub positional: Tensor2D<T>,
    pub layers: Vec<LayerParams<T>>,
    pub mlm_bias: Tensor2D<T>,
}

impl<T: Scalar> TransformerParams<T> {
    /// Number of parameter tensors in the fixed traversal order.
    pub fn n_tensors(&self) -> usize {
        2 + 16 * self.layers.len() + 1
    }

    /// Name of the `idx`-th tensor in the fixed order: `embedding`,
    /// `positional`, then 16 tensors per layer (`layer{i}.w_q`, ...),
    /// then `mlm_bias`.
    pub fn tensor_name(&self, idx: usize) -> alloc::string::String {
        use alloc::format;
        match idx {
            0 => alloc::string::String::from("embedding"),
            1 => alloc::string::String::from("positional"),
            i if i < 2 + 16 * self.layers.len() => {
                let li = (i - 2) / 16;
                format!("layer{}.{}", li, LAYER_TENSOR_NAMES[(i - 2) % 16])
            }
            _ => alloc::string::String::from("mlm_bias"),
        }
    }

    pub fn tensor(&self, idx: usize) -> &Tensor2D<T> {
        match idx {
            0 => &self.embedding,
            1 => &self.positional,
            i if i < 2 + 16 * self.layers.len() => {
                let layer = &self.layers[(i - 2) / 16];
                match (i - 2) % 16 {
                    0 => &layer.w_q,
                    1 => &layer.b_q,
                    2 => &layer.w_k,
                    3 => &layer.b_k,
                    4 => &layer.w_v,
                    5 => &layer.b_v,
                    6 => &layer.w_o,
                    7 => &layer.b_o,
                    8 => &layer.ln1_gain,
                    9 => &layer.ln1_bias,
                    10 => &layer.w1,
                    11 => &layer.b1,
                    12 => &layer.w2,
                    13 => &layer.b2,
                    14 => &layer.ln2_gain,
                    _ => &layer.ln2_bias,
                }
            }
            _ => &self.mlm_bias,
        }
    }

    pub fn tensor_mut(&mut self, idx: usize) -> &mut Tensor2D<T> {
        match idx {
            0 => &mut self.embedding,
            1 => &mut self.positional,
            i if i < 2 + 16 * self.layers.len() => {
                let layer = &mut self.layers[(i - 2) / 16];
                match (i - 2) % 16 {
                    0 => &mut layer.w_q,
                    1 => &mut layer.b_q,
                    2 => &mut layer.w_k,
                    3 => &mut layer.b_k,
                    4 => &mut layer.w_v,
                    5 => &mut layer.b_v,
                    6 => &mut layer.w_o,
                    7 => &mut layer.b_o,
                    8 => &mut layer.ln1_gain,
                    9 => &mut layer.ln1_bias,
                    10 => &mut layer.w1,
                    11 => &mut layer.b1,
                    12 => &mut layer.w2,
                    13 => &mut layer.b2,
                    14 => &mut layer.ln2_gain,
                    _ => &mut layer.ln2_bias,
                }
            }
            _ => &mut self.mlm_bias,
        }
    }

    /// Same-shaped parameter set filled with zeros (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for i in 0..out.n_tensors() {
            let t = out.tensor_mut(i);
            for v in t.data_mut() {
                *v = T::zero();
            }
        }
        out
    }

    pub fn cast<U: Scalar>(&self) -> TransformerParams<U> {
        TransformerParams {
            config: self.config.clone(),
            embedding: self.embedding.cast(),
            positional: self.positional.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    w_q: l.w_q.cast(),
                    b_q: l.b_q.cast(),
                    w_k: l.w_k.cast(),
                    b_k: l.b_k.cast(),
                    w_v: l.w_v.cast(),
                    b_v: l.b_v.cast(),
                    w_o: l.w_o.cast(),
                    b_o: l.b_o.cast(),
                    ln1_gain: l.ln1_gain.cast(),
                    ln1_bias: l.ln1_bias.cast(),
                    w1: l.w1.cast(),
                    b1: l.b1.cast(),
                    w2: l.w2.cast(),
                    b2: l.b2.cast(),
                    ln2_gain: l.ln2_gain.cast(),
                    ln2_bias: l.ln2_bias.cast(),
                })
                .collect(),
            mlm_bias: self.mlm_bias.cast(),
        }
    }
}

/// Per-head capture of one layer: queries, keys, pre-softmax scores
/// (`Q K^T / sqrt(d_head)`), and post-softmax probabilities.
#[derive(Debug, Clone)]
pub struct HeadCapture<T> {
    pub q: Tensor2D<T>,
    pub k: Tensor2D<T>,
    pub scores: Tensor2D<T>,
    pub probs: Tensor2D<T>,
}

#[derive(Debug, Clone)]
pub struct LayerCapture<T> {
    pub heads: Vec<HeadCapture<T>>,
}

/// Capture for a full forward pass, indexed `[layer][head]`.
#[derive(Debug, Clone)]
pub struct ModelCapture<T> {
    pub layers: Vec<LayerCapture<T>>,
}
