//! Scalar statistics: cosine similarity, Shannon entropy, and the
//! Pearson/Spearman correlation tests used on per-layer metric series.

use alloc::vec::Vec;

use super::rng::Rng;
use super::special::student_t_two_sided_p;
use super::tensor::{dot_f64, norm_f64, Scalar};

/// Default Monte-Carlo permutation count for the Spearman p-value.
pub const DEFAULT_SPEARMAN_PERMUTATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StatsError {
    /// Cosine of a zero vector is undefined.
    ZeroNorm,
    /// Entropy input must be non-negative and sum to one.
    NotAProbability,
    /// Correlation needs at least three points.
    TooShort { len: usize },
    /// Correlation of a constant series is undefined.
    ConstantSeries,
    /// Series lengths differ.
    LengthMismatch { x: usize, y: usize },
}

impl core::fmt::Display for StatsError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            StatsError::ZeroNorm => write!(f, "zero-norm vector"),
            StatsError::NotAProbability => write!(f, "input is not a probability vector"),
            StatsError::TooShort { len } => write!(f, "need at least 3 points, got {len}"),
            StatsError::ConstantSeries => write!(f, "constant series has no correlation"),
            StatsError::LengthMismatch { x, y } => write!(f, "length mismatch: {x} vs {y}"),
        }
    }
}

impl core::error::Error for StatsError {}

/// Cosine similarity of two nonzero vectors, clamped to [-1, 1].
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> Result<f64, StatsError> {
    let na = norm_f64(a);
    let nb = norm_f64(b);
    if na == 0.0 || nb == 0.0 {
        return Err(StatsError::ZeroNorm);
    }
    Ok((dot_f64(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Shannon entropy in nats of a probability vector (0 ln 0 = 0).
pub fn shannon_entropy<T: Scalar>(p: &[T]) -> Result<f64, StatsError> {
    let mut sum = 0.0f64;
    let mut h = 0.0f64;
    for &v in p {
        let v = v.to_f64();
        if v < 0.0 || !v.is_finite() {
            return Err(StatsError::NotAProbability);
        }
        sum += v;
        if v > 0.0 {
            h -= v * libm::log(v);
        }
    }
    if libm::fabs(sum - 1.0) > 1e-6 {
        return Err(StatsError::NotAProbability);
    }
    Ok(h.max(0.0))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 3 {
        return Err(StatsError::TooShort { len: x.len() });
    }
    Ok(())
}

fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ConstantSeries);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// Sample Pearson correlation with a two-sided p-value from the
/// t-statistic `t = r sqrt((n-2)/(1-r^2))` against Student-t with n-2
/// degrees of freedom.
pub fn pearson_test(x: &[f64], y: &[f64]) -> Result<(f64, f64), StatsError> {
    check_pair(x, y)?;
    let r = pearson_r(x, y)?;
    let n = x.len() as f64;
    let denom = 1.0 - r * r;
    let p = if denom <= 0.0 {
        0.0
    } else {
        student_t_two_sided_p(r * libm::sqrt((n - 2.0) / denom), n - 2.0)
    };
    Ok((r, p))
}

/// Ranks with ties averaged, 1-based.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| x[i].partial_cmp(&x[j]).unwrap().then(i.cmp(&j)));
    let mut ranks = alloc::vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // Positions i..=j share the average of ranks i+1..=j+1.
        let avg = (i + j + 2) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with a seeded Monte-Carlo permutation
/// p-value (two-sided, add-one corrected). `permutations` controls the
/// Monte-Carlo effort; the exported default is
/// [`DEFAULT_SPEARMAN_PERMUTATIONS`].
pub fn spearman_test(
    x: &[f64],
    y: &[f64],
    permutations: usize,
    rng: &mut Rng,
) -> Result<(f64, f64), StatsError> {
    check_pair(x, y)?;
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson_r(&rx, &ry)?;

    let mut perm = ry.clone();
    let mut hits = 0usize;
    let target = libm::fabs(rho) - 1e-12;
    for _ in 0..permutations {
        rng.shuffle(&mut perm);
        let r = pearson_r(&rx, &perm)?;
        if libm::fabs(r) >= target {
            hits += 1;
        }
    }
    let p = (hits + 1) as f64 / (permutations + 1) as f64;
    Ok((rho, p))
}
