//! Thin singular value decomposition by one-sided Jacobi rotations.
//!
//! Deterministic and dependency-free: columns of the working matrix are
//! orthogonalised pairwise until the maximum normalised off-diagonal
//! product falls below tolerance. Right singular vectors accumulate the
//! rotations; singular values are the final column norms.

use alloc::vec::Vec;

use super::tensor::Tensor2D;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SvdError {
    /// `k` exceeds `min(rows, cols)`.
    BadRank { k: usize, max: usize },
    /// Off-diagonal mass failed to fall below tolerance within the sweep cap.
    NoConvergence { sweeps: usize },
    /// Input had no rows or no columns.
    Empty,
}

impl core::fmt::Display for SvdError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SvdError::BadRank { k, max } => write!(f, "requested rank {k} exceeds {max}"),
            SvdError::NoConvergence { sweeps } => {
                write!(f, "jacobi sweeps did not converge after {sweeps} sweeps")
            }
            SvdError::Empty => write!(f, "empty matrix"),
        }
    }
}

impl core::error::Error for SvdError {}

/// Top-k singular triplets of `x`: `u` is n-by-k, `s` non-increasing and
/// non-negative, `v` is m-by-k, with `u diag(s) v^T ~= x` when k = rank.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Tensor2D<f64>,
    pub s: Vec<f64>,
    pub v: Tensor2D<f64>,
}

const JACOBI_TOL: f64 = 1e-12;

/// Thin SVD keeping the leading `k` factors.
///
/// Sign convention: the largest-magnitude entry of each right singular
/// vector is made positive, so bases are reproducible run to run.
pub fn thin_svd(x: &Tensor2D<f64>, k: usize) -> Result<SvdResult, SvdError> {
    let (n, m) = (x.rows(), x.cols());
    if n == 0 || m == 0 {
        return Err(SvdError::Empty);
    }
    if k > n.min(m) {
        return Err(SvdError::BadRank { k, max: n.min(m) });
    }

    // Work on the tall orientation so the Jacobi side is the short one.
    let transposed = n < m;
    let a = if transposed { x.transpose() } else { x.clone() };
    let (rows, cols) = (a.rows(), a.cols());

    // Column-major working copies: row i of `b` is column i of `a`.
    let mut b = a.transpose();
    let mut v = Tensor2D::<f64>::zeros(cols, cols);
    for i in 0..cols {
        v.set(i, i, 1.0);
    }

    let max_sweeps = 100 * cols.max(1);
    let mut converged = false;
    for _sweep in 0..max_sweeps {
        let mut max_off = 0.0f64;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (alpha, beta, gamma) = {
                    let bp = b.row(p);
                    let bq = b.row(q);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for (&xp, &xq) in bp.iter().zip(bq) {
                        alpha += xp * xp;
                        beta += xq * xq;
                        gamma += xp * xq;
                    }
                    (alpha, beta, gamma)
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let off = libm::fabs(gamma) / libm::sqrt(alpha * beta);
                if off > max_off {
                    max_off = off;
                }
                if off <= JACOBI_TOL {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + libm::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + libm::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_rows(&mut b, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if max_off <= JACOBI_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SvdError::NoConvergence { sweeps: max_sweeps });
    }

    // Singular values are column norms of the rotated matrix.
    let mut order: Vec<usize> = (0..cols).collect();
    let mut norms = Vec::with_capacity(cols);
    for i in 0..cols {
        let mut acc = 0.0;
        for &x in b.row(i) {
            acc += x * x;
        }
        norms.push(libm::sqrt(acc));
    }
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u_tall = Tensor2D::<f64>::zeros(rows, k);
    let mut v_short = Tensor2D::<f64>::zeros(cols, k);
    let mut s = Vec::with_capacity(k);
    for (out_j, &in_j) in order.iter().take(k).enumerate() {
        let sv = norms[in_j];
        s.push(sv);
        // Sign convention on the right singular vector.
        let vin = v.row(in_j);
        let mut best = 0usize;
        let mut best_abs = 0.0;
        for (idx, &val) in vin.iter().enumerate() {
            if libm::fabs(val) > best_abs {
                best_abs = libm::fabs(val);
                best = idx;
            }
        }
        let flip = if vin[best] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..cols {
            v_short.set(i, out_j, flip * vin[i]);
        }
        if sv > 1e-300 {
            let inv = flip / sv;
            for (i, &val) in b.row(in_j).iter().enumerate() {
                u_tall.set(i, out_j, val * inv);
            }
        }
    }

    if transposed {
        // x = a^T = (u_tall s v_short^T)^T = v_short s u_tall^T.
        Ok(SvdResult { u: v_short, s, v: u_tall })
    } else {
        Ok(SvdResult { u: u_tall, s, v: v_short })
    }
}

#[inline]
fn rotate_rows(m: &mut Tensor2D<f64>, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    let (lo, hi) = if p < q { (p, q) } else { (q, p) };
    let data = m.data_mut();
    let (head, tail) = data.split_at_mut(hi * cols);
    let row_lo = &mut head[lo * cols..(lo + 1) * cols];
    let row_hi = &mut tail[..cols];
    if p < q {
        for (xp, xq) in row_lo.iter_mut().zip(row_hi.iter_mut()) {
            let a = *xp;
            let b = *xq;
            *xp = c * a - s * b;
            *xq = s * a + c * b;
        }
    } else {
        for (xq, xp) in row_lo.iter_mut().zip(row_hi.iter_mut()) {
            let a = *xp;
            let b = *xq;
            *xp = c * a - s * b;
            *xq = s * a + c * b;
        }
    }
}
