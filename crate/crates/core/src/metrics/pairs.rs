//! Average pairwise cosine-similarity over a vector pool.
//!
//! Pairs are unordered with distinct members; self-pairs would contribute a
//! constant 1 and bias the estimate. Rows are normalised once up front so a
//! pair costs a single dot product.

use alloc::vec::Vec;

use super::MetricsError;
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{norm_f64, Tensor2D};

/// Pools up to this many vectors are measured exhaustively.
pub const EXHAUSTIVE_THRESHOLD: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineEstimate {
    pub mean: f64,
    /// Sample standard deviation of pair cosines divided by sqrt(n_pairs).
    pub stderr: f64,
    pub n_pairs: usize,
}

fn normalized_rows(vectors: &Tensor2D<f64>) -> Result<Vec<Vec<f64>>, MetricsError> {
    if vectors.rows() < 2 {
        return Err(MetricsError::TooFewVectors { n: vectors.rows() });
    }
    let mut rows = Vec::with_capacity(vectors.rows());
    for i in 0..vectors.rows() {
        let r = vectors.row(i);
        let n = norm_f64(r);
        if n == 0.0 {
            return Err(MetricsError::ZeroVector { index: i });
        }
        rows.push(r.iter().map(|&v| v / n).collect());
    }
    Ok(rows)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn new() -> Self {
        Self { n: 0, mean: 0.0, m2: 0.0 }
    }
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }
    fn finish(self) -> CosineEstimate {
        let stderr = if self.n > 1 {
            libm::sqrt(self.m2 / (self.n as f64 - 1.0)) / libm::sqrt(self.n as f64)
        } else {
            0.0
        };
        CosineEstimate { mean: self.mean, stderr, n_pairs: self.n }
    }
}

/// Mean cosine over all n(n-1)/2 unordered pairs.
pub fn avg_pairwise_cosine_exhaustive(
    vectors: &Tensor2D<f64>,
) -> Result<CosineEstimate, MetricsError> {
    let rows = normalized_rows(vectors)?;
    let mut w = Welford::new();
    for i in 0..rows.len() {
        for j in (i + 1)..rows.len() {
            w.push(dot(&rows[i], &rows[j]).clamp(-1.0, 1.0));
        }
    }
    Ok(w.finish())
}

/// Mean cosine over `n_pairs` uniformly sampled distinct unordered pairs.
pub fn avg_pairwise_cosine_sampled(
    vectors: &Tensor2D<f64>,
    n_pairs: usize,
    rng: &mut Rng,
) -> Result<CosineEstimate, MetricsError> {
    let rows = normalized_rows(vectors)?;
    let n = rows.len();
    let mut w = Welford::new();
    for _ in 0..n_pairs {
        let i = rng.index(n);
        let mut j = rng.index(n - 1);
        if j >= i {
            j += 1;
        }
        w.push(dot(&rows[i], &rows[j]).clamp(-1.0, 1.0));
    }
    Ok(w.finish())
}
