//! Cosine-similarity distribution between independent standard normal
//! vectors in R^d.
//!
//! For X, Y ~ N(0, I_d) the cosine t has density
//! `f(t) = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)) * (1 - t^2)^((d-3)/2)`
//! on (-1, 1): by rotational invariance t is distributed as the first
//! coordinate of a uniform point on the unit sphere, and t^2 follows
//! Beta(1/2, (d-1)/2). The CDF therefore reduces to the regularized
//! incomplete beta, which the quantile inverts by bisection. Both routes
//! are validated against a Monte-Carlo oracle in the acceptance suite.

use alloc::vec::Vec;

use super::MetricsError;
use crate::numerics::special::{ln_gamma, reg_inc_beta};

/// Density of the cosine between two independent standard normals in R^d.
pub fn isotropic_cosine_density(d: usize, t: f64) -> Result<f64, MetricsError> {
    if d < 2 {
        return Err(MetricsError::BadDimension { d });
    }
    if t.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = d as f64;
    let ln_c = ln_gamma(df / 2.0)
        - 0.5 * libm::log(core::f64::consts::PI)
        - ln_gamma((df - 1.0) / 2.0);
    let exponent = (df - 3.0) / 2.0;
    Ok(libm::exp(ln_c + exponent * libm::log(1.0 - t * t)))
}

/// CDF of the isotropic cosine distribution.
pub fn isotropic_cosine_cdf(d: usize, t: f64) -> Result<f64, MetricsError> {
    if d < 2 {
        return Err(MetricsError::BadDimension { d });
    }
    if t <= -1.0 {
        return Ok(0.0);
    }
    if t >= 1.0 {
        return Ok(1.0);
    }
    let half_tail = 0.5 * reg_inc_beta(0.5, (d as f64 - 1.0) / 2.0, t * t);
    Ok(if t >= 0.0 { 0.5 + half_tail } else { 0.5 - half_tail })
}

/// Quantile of the isotropic cosine distribution, by bisection on the CDF
/// to an interval of width 1e-6.
pub fn isotropic_cosine_quantile(d: usize, q: f64) -> Result<f64, MetricsError> {
    if d < 2 {
        return Err(MetricsError::BadDimension { d });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(MetricsError::BadQuantile { q });
    }
    let mut lo = -1.0f64;
    let mut hi = 1.0f64;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if isotropic_cosine_cdf(d, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Quantile plus a midpoint density grid, for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct IsotropicBaseline {
    pub dimension: usize,
    pub quantile_level: f64,
    pub quantile_value: f64,
    /// `(t, f(t))` at midpoints of a uniform partition of (-1, 1).
    pub density: Vec<(f64, f64)>,
}

pub fn isotropic_baseline(
    d: usize,
    q: f64,
    grid_points: usize,
) -> Result<IsotropicBaseline, MetricsError> {
    let quantile_value = isotropic_cosine_quantile(d, q)?;
    let step = 2.0 / grid_points as f64;
    let mut density = Vec::with_capacity(grid_points);
    for i in 0..grid_points {
        let t = -1.0 + (i as f64 + 0.5) * step;
        density.push((t, isotropic_cosine_density(d, t)?));
    }
    Ok(IsotropicBaseline { dimension: d, quantile_level: q, quantile_value, density })
}
