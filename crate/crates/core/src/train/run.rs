//! The training loop: seeded batch sampling, masking, Adam, checkpoints.
//!
//! Every random stream is a pure function of `(seed, purpose, step)`, so a
//! run resumed from any checkpoint replays the remaining steps bit-for-bit.

use alloc::vec::Vec;

use super::{
    adam_step, loss_and_grads, mlm_mask, AdamState, Checkpoint, TokenBatch, TrainConfig,
    TrainError,
};
use crate::model::init_params;
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Scalar;

const STREAM_BATCH: u64 = 0xB;
const STREAM_MASK: u64 = 0xC;

/// Fixed-length, non-overlapping token windows cut from a corpus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSet {
    seq_len: usize,
    ids: Vec<u16>,
}

impl WindowSet {
    /// Keeps only whole windows; the remainder is dropped.
    pub fn new(tokens: &[u16], seq_len: usize) -> Self {
        assert!(seq_len > 0);
        let n = tokens.len() / seq_len;
        Self { seq_len, ids: tokens[..n * seq_len].to_vec() }
    }

    pub fn n_windows(&self) -> usize {
        self.ids.len() / self.seq_len
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn window(&self, i: usize) -> &[u16] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }

    pub fn total_tokens(&self) -> usize {
        self.ids.len()
    }
}

/// Per-step progress record.
#[derive(Debug, Clone, Copy)]
pub struct StepInfo {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub loss_avg: f64,
}

/// Runs the full loop from initialisation, emitting a checkpoint at every
/// configured step (step 0 is the untouched initialisation).
pub fn train<T: Scalar>(
    cfg: &TrainConfig,
    windows: &WindowSet,
    progress: &mut dyn FnMut(&StepInfo),
) -> Result<Vec<Checkpoint<T>>, TrainError> {
    cfg.validate()?;
    check_windows(cfg, windows)?;
    let params = init_params::<T>(&cfg.model, cfg.seed);
    let adam = AdamState::new(&params);
    let start = Checkpoint { step: 0, params, adam, loss_avg: f64::NAN };
    run_from(cfg, windows, start, progress)
}

/// Continues a run from a checkpoint; the result matches the uninterrupted
/// run exactly. Only checkpoints after the resume step are returned.
pub fn resume<T: Scalar>(
    cfg: &TrainConfig,
    windows: &WindowSet,
    from: Checkpoint<T>,
    progress: &mut dyn FnMut(&StepInfo),
) -> Result<Vec<Checkpoint<T>>, TrainError> {
    cfg.validate()?;
    check_windows(cfg, windows)?;
    if from.params.config != cfg.model {
        return Err(TrainError::CheckpointMismatch("model config differs"));
    }
    if from.step > cfg.steps {
        return Err(TrainError::CheckpointMismatch("checkpoint step beyond config steps"));
    }
    run_from(cfg, windows, from, progress)
}

fn check_windows(cfg: &TrainConfig, windows: &WindowSet) -> Result<(), TrainError> {
    let need = cfg.batch_size * cfg.seq_len;
    if windows.total_tokens() < need {
        return Err(TrainError::CorpusTooSmall { have: windows.total_tokens(), need });
    }
    if windows.seq_len() != cfg.seq_len {
        return Err(TrainError::BadConfig("window length differs from seq_len"));
    }
    Ok(())
}

fn run_from<T: Scalar>(
    cfg: &TrainConfig,
    windows: &WindowSet,
    start: Checkpoint<T>,
    progress: &mut dyn FnMut(&StepInfo),
) -> Result<Vec<Checkpoint<T>>, TrainError> {
    let mut params = start.params;
    let mut adam = start.adam;
    let mut loss_avg = start.loss_avg;
    let start_step = start.step;

    let mut out = Vec::new();
    if start_step == 0 && cfg.checkpoint_steps.contains(&0) {
        out.push(Checkpoint { step: 0, params: params.clone(), adam: adam.clone(), loss_avg });
    }

    for step in (start_step + 1)..=cfg.steps {
        let batch = sample_batch(cfg, windows, step);
        let mut mask_rng = Rng::derive(cfg.seed, &[STREAM_MASK, step as u64]);
        let masked = mlm_mask(&batch, cfg.mask_rate, &mut mask_rng);

        let (loss, grads) = loss_and_grads(&params, &masked)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step });
        }
        let lr = effective_lr(cfg, step);
        adam_step(&mut params, &grads, &mut adam, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);

        loss_avg = if loss_avg.is_nan() { loss } else { 0.99 * loss_avg + 0.01 * loss };
        progress(&StepInfo { step, loss, lr, loss_avg });

        if cfg.checkpoint_steps.binary_search(&step).is_ok() {
            out.push(Checkpoint {
                step,
                params: params.clone(),
                adam: adam.clone(),
                loss_avg,
            });
        }
    }
    Ok(out)
}

fn effective_lr(cfg: &TrainConfig, step: usize) -> f64 {
    if cfg.warmup_steps > 0 && step < cfg.warmup_steps {
        cfg.learning_rate * step as f64 / cfg.warmup_steps as f64
    } else {
        cfg.learning_rate
    }
}

/// Uniform window sampling with replacement, keyed by `(seed, step)`.
fn sample_batch(cfg: &TrainConfig, windows: &WindowSet, step: usize) -> TokenBatch {
    let mut rng = Rng::derive(cfg.seed, &[STREAM_BATCH, step as u64]);
    let mut ids = Vec::with_capacity(cfg.batch_size * cfg.seq_len);
    for _ in 0..cfg.batch_size {
        let w = rng.index(windows.n_windows());
        ids.extend_from_slice(windows.window(w));
    }
    TokenBatch::new(cfg.batch_size, cfg.seq_len, ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::train::VOCAB_SIZE;
    use alloc::vec;

    fn tiny_cfg(steps: usize, seed: u64) -> TrainConfig {
        let mut checkpoint_steps = vec![0];
        if steps > 0 {
            if steps > 1 {
                checkpoint_steps.push(steps / 2);
            }
            checkpoint_steps.push(steps);
        }
        checkpoint_steps.dedup();
        TrainConfig {
            model: ModelConfig::new(1, 16, 2, 32, VOCAB_SIZE, 16).unwrap(),
            steps,
            batch_size: 2,
            seq_len: 16,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            mask_rate: 0.2,
            warmup_steps: 0,
            checkpoint_steps,
            seed,
        }
    }

    fn corpus(n: usize) -> WindowSet {
        let tokens: Vec<u16> = (0..n).map(|i| ((i * 7 + 13) % 256) as u16).collect();
        WindowSet::new(&tokens, 16)
    }

    #[test]
    fn zero_steps_yields_init_checkpoint() {
        let cfg = tiny_cfg(0, 3);
        let ckpts = train::<f32>(&cfg, &corpus(256), &mut |_| {}).unwrap();
        assert_eq!(ckpts.len(), 1);
        assert_eq!(ckpts[0].step, 0);
        let fresh: crate::model::TransformerParams<f32> = init_params(&cfg.model, 3);
        for i in 0..fresh.n_tensors() {
            assert_eq!(ckpts[0].params.tensor(i).data(), fresh.tensor(i).data());
        }
    }

    #[test]
    fn checkpoints_match_configured_steps() {
        let cfg = tiny_cfg(20, 1);
        let ckpts = train::<f32>(&cfg, &corpus(512), &mut |_| {}).unwrap();
        let steps: Vec<usize> = ckpts.iter().map(|c| c.step).collect();
        assert_eq!(steps, cfg.checkpoint_steps);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = tiny_cfg(10, 9);
        let a = train::<f32>(&cfg, &corpus(512), &mut |_| {}).unwrap();
        let b = train::<f32>(&cfg, &corpus(512), &mut |_| {}).unwrap();
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.step, cb.step);
            for i in 0..ca.params.n_tensors() {
                assert_eq!(ca.params.tensor(i).data(), cb.params.tensor(i).data());
            }
        }
    }

    #[test]
    fn resume_is_bit_identical() {
        let cfg = tiny_cfg(20, 5);
        let full = train::<f32>(&cfg, &corpus(512), &mut |_| {}).unwrap();
        let mid = full.iter().find(|c| c.step == 10).unwrap().clone();
        let tail = resume::<f32>(&cfg, &corpus(512), mid, &mut |_| {}).unwrap();
        let final_full = full.last().unwrap();
        let final_tail = tail.last().unwrap();
        assert_eq!(final_full.step, final_tail.step);
        for i in 0..final_full.params.n_tensors() {
            assert_eq!(
                final_full.params.tensor(i).data(),
                final_tail.params.tensor(i).data(),
                "tensor {i} differs after resume"
            );
        }
        assert_eq!(final_full.adam.t, final_tail.adam.t);
        for i in 0..final_full.adam.m.len() {
            assert_eq!(final_full.adam.m[i].data(), final_tail.adam.m[i].data());
            assert_eq!(final_full.adam.v[i].data(), final_tail.adam.v[i].data());
        }
        assert_eq!(final_full.loss_avg.to_bits(), final_tail.loss_avg.to_bits());
    }

    #[test]
    fn small_corpus_is_rejected() {
        let cfg = tiny_cfg(5, 1);
        assert!(matches!(
            train::<f32>(&cfg, &corpus(16), &mut |_| {}),
            Err(TrainError::CorpusTooSmall { .. })
        ));
    }

    #[test]
    fn bad_checkpoint_schedule_is_rejected() {
        let mut cfg = tiny_cfg(5, 1);
        cfg.checkpoint_steps = vec![0, 3];
        assert!(matches!(
            train::<f32>(&cfg, &corpus(512), &mut |_| {}),
            Err(TrainError::BadConfig(_))
        ));
    }

    #[test]
    fn loss_improves_on_tiny_run() {
        let mut cfg = tiny_cfg(150, 0);
        cfg.checkpoint_steps = vec![0, 150];
        let mut first = f64::NAN;
        let mut last = f64::NAN;
        let mut n = 0usize;
        train::<f32>(&cfg, &corpus(2048), &mut |info| {
            if n == 0 {
                first = info.loss;
            }
            last = info.loss;
            n += 1;
        })
        .unwrap();
        assert!(last < first, "loss did not improve: {first} -> {last}");
    }
}
