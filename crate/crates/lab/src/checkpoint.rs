//! On-disk training checkpoints.
//!
//! Same container framing as activation dumps but with magic "ANISOCKP":
//! a JSON header (model shape, step, seed, Adam counter, loss average, and
//! the tensor table), followed by raw little-endian f32 tensor data in a
//! fixed order: every parameter tensor, then the Adam first moments in the
//! same order, then the second moments. Save/load/save is byte-identical,
//! and resuming from a loaded checkpoint replays the uninterrupted run
//! bit-for-bit.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anisolab_core::model::{ModelConfig, TransformerParams};
use anisolab_core::train::{AdamState, Checkpoint};
use anisolab_core::Tensor2D;
use serde::{Deserialize, Serialize};

pub const CKPT_MAGIC: [u8; 8] = *b"ANISOCKP";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0} (expected {CKPT_VERSION})")]
    BadVersion(u32),
    #[error("truncated file: expected {expected} more bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("tensor table does not match model shape: {0}")]
    ShapeMismatch(String),
    #[error("config hash mismatch: checkpoint {found}, expected {expected}")]
    ConfigHashMismatch { expected: String, found: String },
    #[error("header JSON: {0}")]
    HeaderJson(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfigDto {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl From<&ModelConfig> for ModelConfigDto {
    fn from(c: &ModelConfig) -> Self {
        Self {
            n_layers: c.n_layers,
            d_model: c.d_model,
            n_heads: c.n_heads,
            d_ff: c.d_ff,
            vocab_size: c.vocab_size,
            max_seq_len: c.max_seq_len,
            init_std: c.init_std,
            ln_eps: c.ln_eps,
        }
    }
}

impl ModelConfigDto {
    pub fn to_config(&self) -> Result<ModelConfig, CheckpointError> {
        let mut cfg = ModelConfig::new(
            self.n_layers,
            self.d_model,
            self.n_heads,
            self.d_ff,
            self.vocab_size,
            self.max_seq_len,
        )
        .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        cfg.init_std = self.init_std;
        cfg.ln_eps = self.ln_eps;
        Ok(cfg)
    }
}

/// FNV-1a over the canonical config encoding; stored in the header and
/// compared on resume.
pub fn config_hash(cfg: &ModelConfig) -> String {
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for v in [cfg.n_layers, cfg.d_model, cfg.n_heads, cfg.d_ff, cfg.vocab_size, cfg.max_seq_len] {
        eat(&(v as u64).to_le_bytes());
    }
    eat(&cfg.init_std.to_bits().to_le_bytes());
    eat(&cfg.ln_eps.to_bits().to_le_bytes());
    format!("{h:016x}")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    model: ModelConfigDto,
    step: u64,
    seed: u64,
    adam_t: u64,
    /// Exact f64 bits of the running loss average (NaN before step 1).
    loss_avg_bits: u64,
    dtype: String,
    config_hash: String,
    tensors: Vec<TensorInfo>,
}

/// A checkpoint plus the run metadata stored beside it.
#[derive(Debug, Clone)]
pub struct CheckpointFile {
    pub checkpoint: Checkpoint<f32>,
    pub seed: u64,
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint<f32>, seed: u64) -> Result<(), CheckpointError> {
    let params = &ckpt.params;
    let mut tensors = Vec::with_capacity(3 * params.n_tensors());
    for i in 0..params.n_tensors() {
        let t = params.tensor(i);
        tensors.push(TensorInfo { name: params.tensor_name(i), rows: t.rows(), cols: t.cols() });
    }
    for prefix in ["adam_m", "adam_v"] {
        for i in 0..params.n_tensors() {
            let t = params.tensor(i);
            tensors.push(TensorInfo {
                name: format!("{prefix}.{}", params.tensor_name(i)),
                rows: t.rows(),
                cols: t.cols(),
            });
        }
    }
    let header = Header {
        model: (&params.config).into(),
        step: ckpt.step as u64,
        seed,
        adam_t: ckpt.adam.t as u64,
        loss_avg_bits: ckpt.loss_avg.to_bits(),
        dtype: "f32".to_string(),
        config_hash: config_hash(&params.config),
        tensors,
    };
    let header_json = serde_json::to_vec(&header)?;

    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&CKPT_MAGIC)?;
    f.write_all(&CKPT_VERSION.to_le_bytes())?;
    f.write_all(&(header_json.len() as u64).to_le_bytes())?;
    f.write_all(&header_json)?;
    let mut write_tensor = |t: &Tensor2D<f32>| -> Result<(), CheckpointError> {
        for &v in t.data() {
            f.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    };
    for i in 0..params.n_tensors() {
        write_tensor(params.tensor(i))?;
    }
    for m in &ckpt.adam.m {
        write_tensor(m)?;
    }
    for v in &ckpt.adam.v {
        write_tensor(v)?;
    }
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<CheckpointFile, CheckpointError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8], CheckpointError> {
        let remaining = bytes.len() - *pos;
        if n > remaining {
            return Err(CheckpointError::Truncated {
                expected: (n - remaining) as u64,
                found: remaining as u64,
            });
        }
        let out = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(out)
    };

    if take(&mut pos, 8)? != CKPT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
    if version != CKPT_VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let header_len = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
    let header: Header = serde_json::from_slice(take(&mut pos, header_len as usize)?)?;
    let config = header.model.to_config()?;

    // Skeleton params define the expected tensor shapes.
    let mut params: TransformerParams<f32> = anisolab_core::model::init_params(&config, 0);
    let expected_tensors = 3 * params.n_tensors();
    if header.tensors.len() != expected_tensors {
        return Err(CheckpointError::ShapeMismatch(format!(
            "header lists {} tensors, model needs {expected_tensors}",
            header.tensors.len()
        )));
    }
    let expected_bytes: u64 = header
        .tensors
        .iter()
        .map(|t| (t.rows * t.cols * 4) as u64)
        .sum();
    let found = (bytes.len() - pos) as u64;
    if expected_bytes != found {
        return Err(CheckpointError::Truncated { expected: expected_bytes, found });
    }

    let read_tensor = |pos: &mut usize,
                           info: &TensorInfo,
                           expect_rows: usize,
                           expect_cols: usize|
     -> Result<Tensor2D<f32>, CheckpointError> {
        if info.rows != expect_rows || info.cols != expect_cols {
            return Err(CheckpointError::ShapeMismatch(format!(
                "{}: header says {}x{}, model needs {expect_rows}x{expect_cols}",
                info.name, info.rows, info.cols
            )));
        }
        let raw = take(pos, info.rows * info.cols * 4)?;
        let data: Vec<f32> =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Tensor2D::from_vec(info.rows, info.cols, data))
    };

    let n = params.n_tensors();
    for i in 0..n {
        let (r, c) = (params.tensor(i).rows(), params.tensor(i).cols());
        *params.tensor_mut(i) = read_tensor(&mut pos, &header.tensors[i], r, c)?;
    }
    let mut adam = AdamState::new(&params);
    for i in 0..n {
        let (r, c) = (params.tensor(i).rows(), params.tensor(i).cols());
        adam.m[i] = read_tensor(&mut pos, &header.tensors[n + i], r, c)?;
    }
    for i in 0..n {
        let (r, c) = (params.tensor(i).rows(), params.tensor(i).cols());
        adam.v[i] = read_tensor(&mut pos, &header.tensors[2 * n + i], r, c)?;
    }
    adam.t = header.adam_t as usize;

    Ok(CheckpointFile {
        checkpoint: Checkpoint {
            step: header.step as usize,
            params,
            adam,
            loss_avg: f64::from_bits(header.loss_avg_bits),
        },
        seed: header.seed,
    })
}

/// Read a checkpoint and verify it belongs to `expected` before resuming.
pub fn read_checkpoint_for(
    path: &Path,
    expected: &ModelConfig,
) -> Result<CheckpointFile, CheckpointError> {
    let file = read_checkpoint(path)?;
    let found = config_hash(&file.checkpoint.params.config);
    let want = config_hash(expected);
    if found != want {
        return Err(CheckpointError::ConfigHashMismatch { expected: want, found });
    }
    Ok(file)
}
