//! Anisotropy measurements: estimated average pairwise cosine-similarity,
//! per-layer drift profiles, drift/anisotropy correlation, and the analytic
//! isotropic baseline those measurements are judged against.

mod isotropic;
mod pairs;

pub use isotropic::{
    isotropic_baseline, isotropic_cosine_density, isotropic_cosine_quantile, IsotropicBaseline,
};
pub use pairs::{
    avg_pairwise_cosine_exhaustive, avg_pairwise_cosine_sampled, CosineEstimate,
    EXHAUSTIVE_THRESHOLD,
};

use alloc::vec::Vec;

use crate::numerics::rng::Rng;
use crate::numerics::stats::{pearson_test, spearman_test, StatsError};
use crate::numerics::tensor::{norm_f64, Tensor2D};

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    /// Cosine needs nonzero vectors; carries the row index of the offender.
    ZeroVector { index: usize },
    /// Need at least two vectors to form a pair.
    TooFewVectors { n: usize },
    /// Need at least three layers to correlate.
    TooFewLayers { n: usize },
    /// Isotropic baseline requires dimension >= 2.
    BadDimension { d: usize },
    /// Quantile level must lie strictly inside (0, 1).
    BadQuantile { q: f64 },
    Stats(StatsError),
}

impl core::fmt::Display for MetricsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetricsError::ZeroVector { index } => write!(f, "zero vector at row {index}"),
            MetricsError::TooFewVectors { n } => write!(f, "need at least 2 vectors, got {n}"),
            MetricsError::TooFewLayers { n } => write!(f, "need at least 3 layers, got {n}"),
            MetricsError::BadDimension { d } => write!(f, "dimension must be >= 2, got {d}"),
            MetricsError::BadQuantile { q } => write!(f, "quantile level must be in (0, 1), got {q}"),
            MetricsError::Stats(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for MetricsError {}

impl From<StatsError> for MetricsError {
    fn from(e: StatsError) -> Self {
        MetricsError::Stats(e)
    }
}

/// Per-layer anisotropy and drift summary.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerMetricProfile {
    pub layer_index: usize,
    pub avg_cosine: f64,
    pub avg_cosine_stderr: f64,
    /// Norm of the mean vector.
    pub drift_norm: f64,
    /// Mean of the vector norms.
    pub mean_vector_norm: f64,
    pub n_pairs: usize,
    pub n_vectors: usize,
}

/// One profile per layer; vectors are pooled over everything in the layer's
/// block. Uses the exhaustive pair mean for small pools
/// (`n <= EXHAUSTIVE_THRESHOLD`), sampled pairs otherwise.
pub fn layer_profiles(
    layers: &[Tensor2D<f64>],
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<Vec<LayerMetricProfile>, MetricsError> {
    let mut out = Vec::with_capacity(layers.len());
    for (li, layer) in layers.iter().enumerate() {
        let est = if layer.rows() <= EXHAUSTIVE_THRESHOLD {
            avg_pairwise_cosine_exhaustive(layer)?
        } else {
            let mut layer_rng = rng.split();
            avg_pairwise_cosine_sampled(layer, n_pairs, &mut layer_rng)?
        };
        let mean = layer.col_means_f64();
        let mean_norm = (0..layer.rows()).map(|i| norm_f64(layer.row(i))).sum::<f64>()
            / layer.rows() as f64;
        out.push(LayerMetricProfile {
            layer_index: li,
            avg_cosine: est.mean,
            avg_cosine_stderr: est.stderr,
            drift_norm: norm_f64(&mean),
            mean_vector_norm: mean_norm,
            n_pairs: est.n_pairs,
            n_vectors: layer.rows(),
        });
    }
    Ok(out)
}

/// Both correlation tests between per-layer drift norm and per-layer average
/// cosine, plus the p <= 0.05 drift classification.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCorrelation {
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub pearson_r: f64,
    pub pearson_p: f64,
    pub drift_correlated: bool,
    pub n_permutations: usize,
}

pub fn drift_correlation(
    profiles: &[LayerMetricProfile],
    permutations: usize,
    rng: &mut Rng,
) -> Result<DriftCorrelation, MetricsError> {
    if profiles.len() < 3 {
        return Err(MetricsError::TooFewLayers { n: profiles.len() });
    }
    let drift: Vec<f64> = profiles.iter().map(|p| p.drift_norm).collect();
    let cosine: Vec<f64> = profiles.iter().map(|p| p.avg_cosine).collect();
    let (rho, sp) = spearman_test(&drift, &cosine, permutations, rng)?;
    let (r, pp) = pearson_test(&drift, &cosine)?;
    Ok(DriftCorrelation {
        spearman_rho: rho,
        spearman_p: sp,
        pearson_r: r,
        pearson_p: pp,
        drift_correlated: sp <= 0.05,
        n_permutations: permutations,
    })
}
