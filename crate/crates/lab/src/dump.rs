//! On-disk activation dumps: layer-indexed batches of hidden-state vectors
//! from any model, ours or external.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! 8  bytes  magic "ANISODMP"
//! 4  bytes  u32 format version (currently 1)
//! 8  bytes  u64 manifest length in bytes
//! n  bytes  manifest JSON (UTF-8)
//! .. bytes  per-layer blocks in manifest order; each vector contiguous,
//!           IEEE-754 f32 or f64 per the manifest dtype
//! ```
//!
//! Every declared length is validated before reading data; writing then
//! reading then writing again is byte-identical.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anisolab_core::Tensor2D;
use serde::{Deserialize, Serialize};

pub const DUMP_MAGIC: [u8; 8] = *b"ANISODMP";
pub const DUMP_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("bad magic: not an activation dump")]
    BadMagic,
    #[error("unsupported dump version {0} (expected {DUMP_VERSION})")]
    BadVersion(u32),
    #[error("truncated file: expected {expected} more bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("declared counts do not match data: layer blocks need {expected} bytes, file has {found}")]
    CountMismatch { expected: u64, found: u64 },
    #[error("manifest inconsistent: {0}")]
    BadManifest(String),
    #[error("manifest JSON: {0}")]
    ManifestJson(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DumpManifest {
    pub model: String,
    pub modality: String,
    pub n_layers: usize,
    pub d_model: usize,
    /// Vectors per layer, in block order.
    pub layer_counts: Vec<u64>,
    pub dtype: Dtype,
    /// Always "little"; recorded explicitly so converters state it.
    pub endianness: String,
    pub notes: String,
}

/// A dump held in memory; values are f64 regardless of the on-disk dtype
/// (f32 round-trips exactly through f64).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationDump {
    pub manifest: DumpManifest,
    pub layers: Vec<Tensor2D<f64>>,
}

impl ActivationDump {
    pub fn new(
        model: &str,
        modality: &str,
        dtype: Dtype,
        notes: &str,
        layers: Vec<Tensor2D<f64>>,
    ) -> Self {
        let d_model = layers.first().map_or(0, |l| l.cols());
        let manifest = DumpManifest {
            model: model.to_string(),
            modality: modality.to_string(),
            n_layers: layers.len(),
            d_model,
            layer_counts: layers.iter().map(|l| l.rows() as u64).collect(),
            dtype,
            endianness: "little".to_string(),
            notes: notes.to_string(),
        };
        Self { manifest, layers }
    }

    fn check_consistent(&self) -> Result<(), DumpError> {
        if self.manifest.n_layers != self.layers.len()
            || self.manifest.layer_counts.len() != self.layers.len()
        {
            return Err(DumpError::BadManifest("layer count mismatch".into()));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.rows() as u64 != self.manifest.layer_counts[i] {
                return Err(DumpError::BadManifest(format!(
                    "layer {i}: manifest declares {} vectors, tensor has {}",
                    self.manifest.layer_counts[i],
                    layer.rows()
                )));
            }
            if layer.cols() != self.manifest.d_model {
                return Err(DumpError::BadManifest(format!(
                    "layer {i}: width {} != d_model {}",
                    layer.cols(),
                    self.manifest.d_model
                )));
            }
        }
        if self.manifest.endianness != "little" {
            return Err(DumpError::BadManifest("endianness must be \"little\"".into()));
        }
        Ok(())
    }
}

pub fn write_dump(path: &Path, dump: &ActivationDump) -> Result<(), DumpError> {
    dump.check_consistent()?;
    let manifest = serde_json::to_vec(&dump.manifest)?;
    let mut f = io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&DUMP_MAGIC)?;
    f.write_all(&DUMP_VERSION.to_le_bytes())?;
    f.write_all(&(manifest.len() as u64).to_le_bytes())?;
    f.write_all(&manifest)?;
    for layer in &dump.layers {
        match dump.manifest.dtype {
            Dtype::F32 => {
                for &v in layer.data() {
                    f.write_all(&(v as f32).to_le_bytes())?;
                }
            }
            Dtype::F64 => {
                for &v in layer.data() {
                    f.write_all(&v.to_le_bytes())?;
                }
            }
        }
    }
    f.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<ActivationDump, DumpError> {
    let bytes = fs::read(path)?;
    read_dump_bytes(&bytes)
}

pub fn read_dump_bytes(bytes: &[u8]) -> Result<ActivationDump, DumpError> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take(8)?;
    if magic != DUMP_MAGIC {
        return Err(DumpError::BadMagic);
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != DUMP_VERSION {
        return Err(DumpError::BadVersion(version));
    }
    let manifest_len = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    let manifest: DumpManifest = serde_json::from_slice(r.take(manifest_len as usize)?)?;

    if manifest.layer_counts.len() != manifest.n_layers {
        return Err(DumpError::BadManifest(format!(
            "n_layers = {} but {} layer counts",
            manifest.n_layers,
            manifest.layer_counts.len()
        )));
    }
    if manifest.endianness != "little" {
        return Err(DumpError::BadManifest("endianness must be \"little\"".into()));
    }
    let total_vectors: u64 = manifest.layer_counts.iter().sum();
    let expected = total_vectors
        .checked_mul(manifest.d_model as u64)
        .and_then(|v| v.checked_mul(manifest.dtype.size() as u64))
        .ok_or_else(|| DumpError::BadManifest("size overflow".into()))?;
    let found = (bytes.len() - r.pos) as u64;
    if expected != found {
        return Err(DumpError::CountMismatch { expected, found });
    }

    let mut layers = Vec::with_capacity(manifest.n_layers);
    for &count in &manifest.layer_counts {
        let n = count as usize * manifest.d_model;
        let mut data = Vec::with_capacity(n);
        match manifest.dtype {
            Dtype::F32 => {
                let raw = r.take(n * 4)?;
                for c in raw.chunks_exact(4) {
                    data.push(f32::from_le_bytes(c.try_into().unwrap()) as f64);
                }
            }
            Dtype::F64 => {
                let raw = r.take(n * 8)?;
                for c in raw.chunks_exact(8) {
                    data.push(f64::from_le_bytes(c.try_into().unwrap()));
                }
            }
        }
        layers.push(Tensor2D::from_vec(count as usize, manifest.d_model, data));
    }
    Ok(ActivationDump { manifest, layers })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DumpError> {
        let remaining = self.bytes.len() - self.pos;
        if n > remaining {
            return Err(DumpError::Truncated {
                expected: (n - remaining) as u64,
                found: remaining as u64,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }
}

/// Convenience used by pipelines and tests: wrap per-layer hidden states
/// into one dump structure.
pub fn dump_from_hidden_states(
    model: &str,
    per_layer: Vec<Tensor2D<f64>>,
    dtype: Dtype,
    notes: &str,
) -> ActivationDump {
    ActivationDump::new(model, "text-bytes", dtype, notes, per_layer)
}
