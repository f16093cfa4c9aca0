//! Masked-token training for the toy encoder: corruption, exact gradients,
//! Adam, and checkpointed runs.
//!
//! The vocabulary is fixed at byte level: ids 0-255 are raw bytes, followed
//! by the mask/pad/cls specials. Gradients are hand-derived for the fixed
//! architecture and verified against central finite differences.

mod adam;
mod grad;
mod mask;
mod run;

pub use adam::{adam_step, AdamState};
pub use grad::loss_and_grads;
pub use mask::mlm_mask;
pub use run::{resume, train, StepInfo, WindowSet};

use alloc::vec::Vec;

use crate::model::{ModelConfig, TransformerParams};
use crate::numerics::tensor::Scalar;

pub const BYTE_TOKENS: usize = 256;
pub const MASK_TOKEN: u16 = 256;
pub const PAD_TOKEN: u16 = 257;
pub const CLS_TOKEN: u16 = 258;
pub const VOCAB_SIZE: usize = 259;
/// Label value marking positions that do not contribute to the loss.
pub const IGNORE_LABEL: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub enum TrainError {
    BadConfig(&'static str),
    /// Corpus shorter than one batch.
    CorpusTooSmall { have: usize, need: usize },
    /// A batch with no masked positions has no loss.
    NoMaskedPositions,
    /// Loss became non-finite at the given step.
    Diverged { step: usize },
    /// Checkpoint does not match the config it is resumed under.
    CheckpointMismatch(&'static str),
    Model(crate::model::ModelError),
}

impl core::fmt::Display for TrainError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TrainError::BadConfig(m) => write!(f, "invalid train config: {m}"),
            TrainError::CorpusTooSmall { have, need } => {
                write!(f, "corpus has {have} tokens, need at least {need}")
            }
            TrainError::NoMaskedPositions => write!(f, "batch contains no masked positions"),
            TrainError::Diverged { step } => write!(f, "loss diverged (non-finite) at step {step}"),
            TrainError::CheckpointMismatch(m) => write!(f, "checkpoint mismatch: {m}"),
            TrainError::Model(e) => write!(f, "model error: {e}"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<crate::model::ModelError> for TrainError {
    fn from(e: crate::model::ModelError) -> Self {
        TrainError::Model(e)
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub mask_rate: f64,
    /// Linear learning-rate warmup over this many steps (0 disables it).
    pub warmup_steps: usize,
    /// Steps at which checkpoints are emitted; must contain 0 and `steps`.
    pub checkpoint_steps: Vec<usize>,
    pub seed: u64,
}

impl TrainConfig {
    /// Reference toy run: 2 layers, 64-wide, 4 heads, byte vocabulary,
    /// 5000 steps at lr 1e-3.
    pub fn toy_reference(seed: u64) -> Self {
        Self {
            model: ModelConfig::toy(),
            steps: 5000,
            batch_size: 8,
            seq_len: 64,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mask_rate: 0.15,
            warmup_steps: 0,
            checkpoint_steps: alloc::vec![0, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000],
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.mask_rate > 0.0 && self.mask_rate < 1.0) {
            return Err(TrainError::BadConfig("mask_rate must be in (0, 1)"));
        }
        if self.batch_size == 0 || self.seq_len == 0 {
            return Err(TrainError::BadConfig("batch_size and seq_len must be >= 1"));
        }
        if self.seq_len > self.model.max_seq_len {
            return Err(TrainError::BadConfig("seq_len exceeds model max_seq_len"));
        }
        if self.model.vocab_size < MASK_TOKEN as usize + 1 {
            return Err(TrainError::BadConfig("vocab too small for the mask token"));
        }
        if self.checkpoint_steps.is_empty()
            || self.checkpoint_steps[0] != 0
            || *self.checkpoint_steps.last().unwrap() != self.steps
        {
            return Err(TrainError::BadConfig("checkpoint_steps must start at 0 and end at steps"));
        }
        if self.checkpoint_steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::BadConfig("checkpoint_steps must be strictly increasing"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TrainError::BadConfig("learning_rate must be positive"));
        }
        Ok(())
    }
}

/// A batch of same-length token sequences, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenBatch {
    pub n_seqs: usize,
    pub seq_len: usize,
    pub ids: Vec<u16>,
}

impl TokenBatch {
    pub fn new(n_seqs: usize, seq_len: usize, ids: Vec<u16>) -> Self {
        assert_eq!(ids.len(), n_seqs * seq_len);
        Self { n_seqs, seq_len, ids }
    }

    pub fn seq(&self, i: usize) -> &[u16] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

/// A corrupted batch with recovery labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedBatch {
    pub input: TokenBatch,
    /// Flat, same layout as `input.ids`; `IGNORE_LABEL` at unmasked positions.
    pub labels: Vec<u16>,
    /// Masked position indices per sequence, ascending.
    pub mask_positions: Vec<Vec<usize>>,
}

impl MaskedBatch {
    pub fn labels_for(&self, seq: usize) -> &[u16] {
        &self.labels[seq * self.input.seq_len..(seq + 1) * self.input.seq_len]
    }
}

/// Training state snapshot: everything needed to continue the run
/// bit-for-bit.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub step: usize,
    pub params: TransformerParams<T>,
    pub adam: AdamState<T>,
    pub loss_avg: f64,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn at_init(config: &ModelConfig, seed: u64) -> Self {
        let params = crate::model::init_params(config, seed);
        let adam = AdamState::new(&params);
        Checkpoint { step: 0, params, adam, loss_avg: f64::NAN }
    }
}
