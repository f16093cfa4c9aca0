//! Toy training runs: TOML config in, checkpoints and a loss log out.
//! Progress is emitted as line-delimited JSON on standard output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anisolab_core::model::ModelConfig;
use anisolab_core::train::{train, Checkpoint, TrainConfig, WindowSet, VOCAB_SIZE};
use anyhow::Context;
use serde::Deserialize;

use crate::corpus::load_corpus;
use crate::manifest::RunManifest;

pub struct TrainToyOptions {
    pub config: PathBuf,
    pub corpus: PathBuf,
    pub seed: Option<u64>,
    pub quiet: bool,
    pub out: PathBuf,
}

fn default_mask_rate() -> f64 {
    0.15
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}
fn default_vocab() -> usize {
    VOCAB_SIZE
}
fn default_init_std() -> f64 {
    0.02
}
fn default_ln_eps() -> f64 {
    1e-12
}

#[derive(Debug, Deserialize)]
pub struct ModelFileConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    #[serde(default = "default_vocab")]
    pub vocab_size: usize,
    pub max_seq_len: Option<usize>,
    #[serde(default = "default_init_std")]
    pub init_std: f64,
    #[serde(default = "default_ln_eps")]
    pub ln_eps: f64,
}

#[derive(Debug, Deserialize)]
pub struct TrainFileConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub seq_len: usize,
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "default_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "default_adam_eps")]
    pub adam_eps: f64,
    #[serde(default = "default_mask_rate")]
    pub mask_rate: f64,
    #[serde(default)]
    pub warmup_steps: usize,
    /// Defaults to the standard log-spaced schedule clipped to `steps`.
    pub checkpoint_steps: Option<Vec<usize>>,
    #[serde(default)]
    pub seed: u64,
    pub model: ModelFileConfig,
}

/// The log-spaced schedule used when a config does not name one.
pub fn default_checkpoint_schedule(steps: usize) -> Vec<usize> {
    let mut s: Vec<usize> = [0usize, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000]
        .into_iter()
        .filter(|&v| v <= steps)
        .collect();
    if *s.last().unwrap_or(&0) != steps {
        s.push(steps);
    }
    s
}

impl TrainFileConfig {
    pub fn to_train_config(&self) -> anyhow::Result<TrainConfig> {
        let mut cfg = ModelConfig::new(
            self.model.n_layers,
            self.model.d_model,
            self.model.n_heads,
            self.model.d_ff,
            self.model.vocab_size,
            self.model.max_seq_len.unwrap_or(self.seq_len),
        )
        .map_err(|e| anyhow::anyhow!("{e}"))?;
        cfg.init_std = self.model.init_std;
        cfg.ln_eps = self.model.ln_eps;
        Ok(TrainConfig {
            model: cfg,
            steps: self.steps,
            batch_size: self.batch_size,
            seq_len: self.seq_len,
            learning_rate: self.learning_rate,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_eps: self.adam_eps,
            mask_rate: self.mask_rate,
            warmup_steps: self.warmup_steps,
            checkpoint_steps: self
                .checkpoint_steps
                .clone()
                .unwrap_or_else(|| default_checkpoint_schedule(self.steps)),
            seed: self.seed,
        })
    }
}

pub fn checkpoint_file_name(step: usize) -> String {
    format!("step-{step:07}.ckpt")
}

pub struct TrainOutcome {
    pub config: TrainConfig,
    pub checkpoints: Vec<Checkpoint<f32>>,
    pub final_loss_avg: f64,
}

pub fn run(opts: &TrainToyOptions) -> anyhow::Result<TrainOutcome> {
    let t0 = Instant::now();
    super::ensure_out_dir(&opts.out)?;
    let raw = fs::read_to_string(&opts.config)
        .with_context(|| format!("reading config {}", opts.config.display()))?;
    let file_cfg: TrainFileConfig = toml::from_str(&raw).context("parsing train config")?;
    let mut cfg = file_cfg.to_train_config()?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }

    let tokens = load_corpus(&opts.corpus)?;
    let windows = WindowSet::new(&tokens, cfg.seq_len);

    let mut log = fs::File::create(opts.out.join("loss_log.jsonl"))?;
    let stdout = std::io::stdout();
    let quiet = opts.quiet;
    let run_start = Instant::now();
    let mut final_loss_avg = f64::NAN;
    let checkpoints = train::<f32>(&cfg, &windows, &mut |info| {
        final_loss_avg = info.loss_avg;
        let line = format!(
            "{{\"step\":{},\"loss\":{:.6},\"loss_avg\":{:.6},\"lr\":{:e},\"wall_time_s\":{:.3}}}",
            info.step,
            info.loss,
            info.loss_avg,
            info.lr,
            run_start.elapsed().as_secs_f64()
        );
        let _ = writeln!(log, "{line}");
        if !quiet && (info.step % 100 == 0 || info.step == 1) {
            let _ = writeln!(stdout.lock(), "{line}");
        }
    })
    .map_err(|e| anyhow::anyhow!("training failed: {e}"))?;

    let mut manifest = RunManifest::new("train-toy");
    for ckpt in &checkpoints {
        let name = checkpoint_file_name(ckpt.step);
        crate::checkpoint::write_checkpoint(&opts.out.join(&name), ckpt, cfg.seed)?;
        manifest.output(&name);
    }

    manifest
        .arg("config", opts.config.display())
        .arg("corpus", opts.corpus.display())
        .arg("steps", cfg.steps)
        .arg("batch_size", cfg.batch_size)
        .arg("seq_len", cfg.seq_len)
        .arg("learning_rate", cfg.learning_rate)
        .arg("mask_rate", cfg.mask_rate)
        .seed("seed", cfg.seed)
        .output("loss_log.jsonl")
        .note("byte-level vocabulary: 256 bytes + mask/pad/cls")
        .note("masked positions: 80% mask token, 10% random byte, 10% unchanged");
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    manifest.write(&opts.out.join("run_manifest.json"))?;

    Ok(TrainOutcome { config: cfg, checkpoints, final_loss_avg })
}

/// Loads every checkpoint in a directory, sorted by step.
pub fn load_checkpoint_dir(dir: &Path) -> anyhow::Result<Vec<Checkpoint<f32>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading checkpoint dir {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        anyhow::bail!("no .ckpt files in {}", dir.display());
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        out.push(crate::checkpoint::read_checkpoint(&p)?.checkpoint);
    }
    out.sort_by_key(|c| c.step);
    Ok(out)
}
