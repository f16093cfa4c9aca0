//! Bias-injection experiments on a single untrained encoder block.
//!
//! A common direction of controlled norm is added to every input embedding;
//! the block's input/output geometry (cosines, norms, per-head query/key
//! statistics, score histograms, softmax sharpness) is measured per norm
//! level, and a bisection locates the bias norm at which the mean input norm
//! meets the mean output norm.

use alloc::vec;
use alloc::vec::Vec;

use crate::metrics::{
    avg_pairwise_cosine_exhaustive, CosineEstimate, MetricsError,
};
use crate::model::{forward_block, LayerParams, ModelConfig, ModelError};
use crate::numerics::rng::Rng;
use crate::numerics::stats::shannon_entropy;
use crate::numerics::tensor::{norm_f64, Scalar, Tensor2D};

#[derive(Debug, Clone, PartialEq)]
pub enum DriftLabError {
    /// The gap function has the same sign at both bracket ends.
    NoSignChange { g_lo: f64, g_hi: f64 },
    BadBracket { lo: f64, hi: f64 },
    BadNorms(&'static str),
    Model(ModelError),
    Metrics(MetricsError),
}

impl core::fmt::Display for DriftLabError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DriftLabError::NoSignChange { g_lo, g_hi } => {
                write!(f, "no sign change in bracket: g(lo)={g_lo}, g(hi)={g_hi}")
            }
            DriftLabError::BadBracket { lo, hi } => write!(f, "invalid bracket ({lo}, {hi})"),
            DriftLabError::BadNorms(m) => write!(f, "invalid norm list: {m}"),
            DriftLabError::Model(e) => write!(f, "{e}"),
            DriftLabError::Metrics(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for DriftLabError {}

impl From<ModelError> for DriftLabError {
    fn from(e: ModelError) -> Self {
        DriftLabError::Model(e)
    }
}

impl From<MetricsError> for DriftLabError {
    fn from(e: MetricsError) -> Self {
        DriftLabError::Metrics(e)
    }
}

/// A bias direction seeded independently of its norm: `b = u/||u|| * norm`
/// with `u ~ N(0, I_d)`, exactly zero when `norm == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSpec {
    pub direction_seed: u64,
    pub norm: f64,
    pub dimension: usize,
}

impl BiasSpec {
    pub fn realize(&self) -> Vec<f64> {
        assert!(self.norm >= 0.0);
        if self.norm == 0.0 {
            return vec![0.0; self.dimension];
        }
        let mut rng = Rng::derive(self.direction_seed, &[0xB1A5]);
        let mut u: Vec<f64> = (0..self.dimension).map(|_| rng.normal()).collect();
        let n = norm_f64(&u);
        let scale = self.norm / n;
        for v in u.iter_mut() {
            *v *= scale;
        }
        u
    }
}

/// Defaults matching the standard setup: 16 sequences of length 512,
/// cosine estimates over a 2000-row subsample, 200 histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub n_seqs: usize,
    pub seq_len: usize,
    pub cosine_subsample: usize,
    pub hist_bins: usize,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self { n_seqs: 16, seq_len: 512, cosine_subsample: 2000, hist_bins: 200 }
    }
}

/// Per-head query/key statistics at one bias level.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadQkStats {
    pub head: usize,
    /// Mean Euclidean norm of query rows.
    pub q_mean_norm: f64,
    pub k_mean_norm: f64,
    /// Cosine between the mean query and the mean key.
    pub qk_mean_cosine: f64,
}

/// Pre-softmax score histogram with binning frozen at the zero-bias level.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreHistogram {
    pub lo: f64,
    pub hi: f64,
    /// Out-of-range scores are clamped into the edge bins.
    pub counts: Vec<u64>,
}

/// Softmax sharpness summary at one bias level: per-position extremes are
/// averaged over rows, heads, and sequences; per-sequence extremes over the
/// whole attention matrix per head, averaged over heads and sequences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxStats {
    pub pos_max: f64,
    pub pos_median: f64,
    pub pos_min: f64,
    pub seq_max: f64,
    pub seq_min: f64,
    pub row_entropy: f64,
}

/// All measurements at one bias norm.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub bias_norm: f64,
    pub input_avg_cosine: CosineEstimate,
    pub output_avg_cosine: CosineEstimate,
    /// Mean of row norms.
    pub input_mean_norm: f64,
    pub output_mean_norm: f64,
    /// Norm of the mean row (drift component), reported alongside.
    pub input_norm_of_mean: f64,
    pub output_norm_of_mean: f64,
    pub score_mean: f64,
    pub score_var: f64,
    pub heads: Vec<HeadQkStats>,
    pub score_histogram: ScoreHistogram,
    pub softmax: SoftmaxStats,
}

/// Input embedding sequences drawn uniformly (with replacement) from the
/// embedding table.
pub fn make_inputs<T: Scalar>(
    embedding: &Tensor2D<T>,
    n_seqs: usize,
    seq_len: usize,
    rng: &mut Rng,
) -> Vec<Tensor2D<T>> {
    assert!(embedding.rows() > 0, "empty embedding table");
    let mut out = Vec::with_capacity(n_seqs);
    for _ in 0..n_seqs {
        let mut x = Tensor2D::<T>::zeros(seq_len, embedding.cols());
        for i in 0..seq_len {
            let r = rng.index(embedding.rows());
            x.row_mut(i).copy_from_slice(embedding.row(r));
        }
        out.push(x);
    }
    out
}

fn add_bias<T: Scalar>(x: &Tensor2D<T>, bias: &[f64]) -> Tensor2D<T> {
    let mut out = x.clone();
    let bias_t: Vec<T> = bias.iter().map(|&v| T::from_f64(v)).collect();
    out.add_row_broadcast(&bias_t);
    out
}

/// Mean and norm-of-mean over all rows of a batch, f64 accumulation.
fn batch_norm_stats<T: Scalar>(batch: &[Tensor2D<T>]) -> (f64, f64) {
    let d = batch[0].cols();
    let mut mean = vec![0.0f64; d];
    let mut norm_sum = 0.0f64;
    let mut n = 0usize;
    for x in batch {
        for i in 0..x.rows() {
            let row = x.row(i);
            norm_sum += norm_f64(row);
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v.to_f64();
            }
            n += 1;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    (norm_sum / n as f64, norm_f64(&mean))
}

/// Fixed row subsample (by flat index over the pooled batch) used for the
/// cosine estimates; chosen once per sweep so only the bias varies.
fn subsample_rows<T: Scalar>(batch: &[Tensor2D<T>], picks: &[usize]) -> Tensor2D<f64> {
    let seq_len = batch[0].rows();
    let d = batch[0].cols();
    let mut out = Tensor2D::<f64>::zeros(picks.len(), d);
    for (o, &flat) in picks.iter().enumerate() {
        let row = batch[flat / seq_len].row(flat % seq_len);
        for (dst, &v) in out.row_mut(o).iter_mut().zip(row) {
            *dst = v.to_f64();
        }
    }
    out
}

struct CaptureStats {
    score_mean: f64,
    score_var: f64,
    heads: Vec<HeadQkStats>,
    hist: ScoreHistogram,
    softmax: SoftmaxStats,
}

/// Mean and variance of the pre-softmax scores at one bias level, used to
/// freeze the histogram binning before any full sweep level runs.
fn score_moments<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    inputs: &[Tensor2D<T>],
    bias: &[f64],
) -> Result<(f64, f64), DriftLabError> {
    let mut sum = 0.0f64;
    let mut sq = 0.0f64;
    let mut n = 0usize;
    for x in inputs {
        let biased = add_bias(x, bias);
        let (_, cap) = forward_block(cfg, layer, &biased, true)?;
        for head in &cap.unwrap().heads {
            for &s in head.scores.data() {
                let s = s.to_f64();
                sum += s;
                sq += s * s;
                n += 1;
            }
        }
    }
    let mean = sum / n as f64;
    Ok((mean, sq / n as f64 - mean * mean))
}

/// Streams one forward pass per sequence, folding capture statistics into
/// scalars and collecting the block outputs. `binning` is the frozen
/// histogram range shared by every level of a sweep.
fn run_level<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    inputs: &[Tensor2D<T>],
    bias: &[f64],
    binning: (f64, f64),
    settings: &SweepSettings,
) -> Result<(Vec<Tensor2D<T>>, CaptureStats), DriftLabError> {
    let n_heads = cfg.n_heads;
    let mut outputs = Vec::with_capacity(inputs.len());

    let mut score_sum = 0.0f64;
    let mut score_sq = 0.0f64;
    let mut score_n = 0usize;
    let mut q_norm = vec![0.0f64; n_heads];
    let mut k_norm = vec![0.0f64; n_heads];
    let mut q_mean: Vec<Vec<f64>> = vec![vec![0.0; cfg.d_head]; n_heads];
    let mut k_mean: Vec<Vec<f64>> = vec![vec![0.0; cfg.d_head]; n_heads];
    let mut rows_per_head = 0usize;
    let mut pos_max = 0.0f64;
    let mut pos_med = 0.0f64;
    let mut pos_min = 0.0f64;
    let mut n_rows_stat = 0usize;
    let mut seq_max = 0.0f64;
    let mut seq_min = 0.0f64;
    let mut n_seq_stat = 0usize;
    let mut entropy_sum = 0.0f64;

    let (hist_lo, hist_hi) = binning;
    let mut counts = vec![0u64; settings.hist_bins];

    for x in inputs {
        let biased = add_bias(x, bias);
        let (y, cap) = forward_block(cfg, layer, &biased, true)?;
        outputs.push(y);
        let cap = cap.unwrap();
        for (h, head) in cap.heads.iter().enumerate() {
            rows_per_head += head.q.rows();
            for i in 0..head.q.rows() {
                q_norm[h] += norm_f64(head.q.row(i));
                k_norm[h] += norm_f64(head.k.row(i));
                for (m, &v) in q_mean[h].iter_mut().zip(head.q.row(i)) {
                    *m += v.to_f64();
                }
                for (m, &v) in k_mean[h].iter_mut().zip(head.k.row(i)) {
                    *m += v.to_f64();
                }
            }
            for &s in head.scores.data() {
                let s = s.to_f64();
                score_sum += s;
                score_sq += s * s;
                score_n += 1;
                counts[score_bin(s, hist_lo, hist_hi, settings.hist_bins)] += 1;
            }
            // Softmax stats.
            let mut head_max = f64::NEG_INFINITY;
            let mut head_min = f64::INFINITY;
            let mut row_buf: Vec<f64> = Vec::with_capacity(head.probs.cols());
            for i in 0..head.probs.rows() {
                row_buf.clear();
                row_buf.extend(head.probs.row(i).iter().map(|&p| p.to_f64()));
                let mut rmax = f64::NEG_INFINITY;
                let mut rmin = f64::INFINITY;
                let mut total = 0.0f64;
                for &p in &row_buf {
                    rmax = rmax.max(p);
                    rmin = rmin.min(p);
                    total += p;
                }
                pos_max += rmax;
                pos_min += rmin;
                n_rows_stat += 1;
                head_max = head_max.max(rmax);
                head_min = head_min.min(rmin);
                // Rows sum to 1 within f32 tolerance; renormalise before
                // the entropy domain check.
                let renorm: Vec<f64> = row_buf.iter().map(|p| p / total).collect();
                entropy_sum += shannon_entropy(&renorm).expect("attention row is a distribution");
                pos_med += median_in_place(&mut row_buf);
            }
            seq_max += head_max;
            seq_min += head_min;
            n_seq_stat += 1;
        }
    }

    let score_mean = score_sum / score_n as f64;
    let score_var = score_sq / score_n as f64 - score_mean * score_mean;

    let heads = (0..n_heads)
        .map(|h| {
            let rows = rows_per_head / n_heads;
            let qm: Vec<f64> = q_mean[h].iter().map(|v| v / rows as f64).collect();
            let km: Vec<f64> = k_mean[h].iter().map(|v| v / rows as f64).collect();
            HeadQkStats {
                head: h,
                q_mean_norm: q_norm[h] / rows as f64,
                k_mean_norm: k_norm[h] / rows as f64,
                qk_mean_cosine: crate::numerics::stats::cosine(&qm, &km).unwrap_or(0.0),
            }
        })
        .collect();

    Ok((
        outputs,
        CaptureStats {
            score_mean,
            score_var,
            heads,
            hist: ScoreHistogram { lo: hist_lo, hi: hist_hi, counts },
            softmax: SoftmaxStats {
                pos_max: pos_max / n_rows_stat as f64,
                pos_median: pos_med / n_rows_stat as f64,
                pos_min: pos_min / n_rows_stat as f64,
                seq_max: seq_max / n_seq_stat as f64,
                seq_min: seq_min / n_seq_stat as f64,
                row_entropy: entropy_sum / n_rows_stat as f64,
            },
        },
    ))
}

fn score_bin(s: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let w = (hi - lo) / bins as f64;
    let idx = libm::floor((s - lo) / w) as isize;
    idx.clamp(0, bins as isize - 1) as usize
}

fn median_in_place(xs: &mut [f64]) -> f64 {
    let n = xs.len();
    let mid = n / 2;
    let (_, m, _) = xs.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
    let hi = *m;
    if n % 2 == 1 {
        hi
    } else {
        let (_, m2, _) = xs[..mid].select_nth_unstable_by(mid - 1, |a, b| a.partial_cmp(b).unwrap());
        0.5 * (hi + *m2)
    }
}

/// One record per bias norm, all sharing the same input batch, bias
/// direction, cosine subsample, and histogram binning.
pub fn bias_sweep<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    embedding: &Tensor2D<T>,
    norms: &[f64],
    direction_seed: u64,
    rng: &mut Rng,
    settings: &SweepSettings,
) -> Result<Vec<SweepRecord>, DriftLabError> {
    if norms.is_empty() {
        return Err(DriftLabError::BadNorms("empty"));
    }
    if norms.iter().any(|&n| n.is_nan() || n < 0.0) {
        return Err(DriftLabError::BadNorms("norms must be non-negative"));
    }
    if norms.windows(2).any(|w| w[0] > w[1]) {
        return Err(DriftLabError::BadNorms("norms must be sorted ascending"));
    }

    let mut input_rng = rng.split();
    let inputs = make_inputs(embedding, settings.n_seqs, settings.seq_len, &mut input_rng);
    let total_rows = settings.n_seqs * settings.seq_len;
    let n_sub = settings.cosine_subsample.min(total_rows);
    let mut pick_rng = rng.split();
    let picks = pick_rng.distinct_indices(total_rows, n_sub);

    // Freeze the score histogram range from the first (lowest) norm level.
    let binning = {
        let bias =
            BiasSpec { direction_seed, norm: norms[0], dimension: cfg.d_model }.realize();
        let (mean, var) = score_moments(cfg, layer, &inputs, &bias)?;
        let sd = libm::sqrt(var.max(0.0));
        let lo = -mean - 6.0 * sd;
        let hi = mean + 6.0 * sd;
        if hi <= lo {
            let mid = 0.5 * (lo + hi);
            (mid - 1e-6, mid + 1e-6)
        } else {
            (lo, hi)
        }
    };

    let mut out = Vec::with_capacity(norms.len());
    for &n in norms {
        let bias = BiasSpec { direction_seed, norm: n, dimension: cfg.d_model }.realize();
        let biased: Vec<Tensor2D<T>> = inputs.iter().map(|x| add_bias(x, &bias)).collect();
        let (outputs, stats) = run_level(cfg, layer, &inputs, &bias, binning, settings)?;

        let (input_mean_norm, input_norm_of_mean) = batch_norm_stats(&biased);
        let (output_mean_norm, output_norm_of_mean) = batch_norm_stats(&outputs);
        let input_avg_cosine = avg_pairwise_cosine_exhaustive(&subsample_rows(&biased, &picks))?;
        let output_avg_cosine = avg_pairwise_cosine_exhaustive(&subsample_rows(&outputs, &picks))?;

        out.push(SweepRecord {
            bias_norm: n,
            input_avg_cosine,
            output_avg_cosine,
            input_mean_norm,
            output_mean_norm,
            input_norm_of_mean,
            output_norm_of_mean,
            score_mean: stats.score_mean,
            score_var: stats.score_var,
            heads: stats.heads,
            score_histogram: stats.hist,
            softmax: stats.softmax,
        });
    }
    Ok(out)
}

/// Sharpness table rows, one per bias norm, for reporting.
pub fn softmax_sharpness(records: &[SweepRecord]) -> Vec<(f64, SoftmaxStats)> {
    records.iter().map(|r| (r.bias_norm, r.softmax)).collect()
}

/// Result of the input/output norm fixed-point search.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub n_star: f64,
    pub gap_at_n_star: f64,
    pub bracket: (f64, f64),
    pub evaluations: usize,
    pub input_mean_norm: f64,
    pub output_mean_norm: f64,
    /// Gap values at the bracket ends, for sign-change auditing.
    pub gap_lo: f64,
    pub gap_hi: f64,
}

const FIXED_POINT_MAX_EVALS: usize = 60;

/// Bisection on `g(N) = E||T(x+b_N)|| - E||x+b_N||` over the bracket, with a
/// fixed input batch and bias direction across all evaluations. Stops when
/// `|g| <= rel_tol * E||x+b_N||` or the bracket narrows to
/// `rel_tol * max(1, hi)`.
#[allow(clippy::too_many_arguments)]
pub fn find_fixed_point<T: Scalar>(
    cfg: &ModelConfig,
    layer: &LayerParams<T>,
    embedding: &Tensor2D<T>,
    bracket: (f64, f64),
    rel_tol: f64,
    direction_seed: u64,
    rng: &mut Rng,
    settings: &SweepSettings,
) -> Result<FixedPointResult, DriftLabError> {
    let (lo0, hi0) = bracket;
    if !(lo0 >= 0.0 && hi0 > lo0) {
        return Err(DriftLabError::BadBracket { lo: lo0, hi: hi0 });
    }
    let mut input_rng = rng.split();
    let inputs = make_inputs(embedding, settings.n_seqs, settings.seq_len, &mut input_rng);

    let gap_at = |n: f64| -> Result<(f64, f64, f64), DriftLabError> {
        let bias = BiasSpec { direction_seed, norm: n, dimension: cfg.d_model }.realize();
        let mut in_norm = 0.0f64;
        let mut out_norm = 0.0f64;
        let mut rows = 0usize;
        for x in &inputs {
            let biased = add_bias(x, &bias);
            let (y, _) = forward_block(cfg, layer, &biased, false)?;
            for i in 0..biased.rows() {
                in_norm += norm_f64(biased.row(i));
                out_norm += norm_f64(y.row(i));
                rows += 1;
            }
        }
        in_norm /= rows as f64;
        out_norm /= rows as f64;
        Ok((out_norm - in_norm, in_norm, out_norm))
    };

    let mut evals = 2usize;
    let (g_lo, in_lo, out_lo) = gap_at(lo0)?;
    let (g_hi, _, _) = gap_at(hi0)?;
    if g_lo == 0.0 {
        return Ok(FixedPointResult {
            n_star: lo0,
            gap_at_n_star: 0.0,
            bracket,
            evaluations: evals,
            input_mean_norm: in_lo,
            output_mean_norm: out_lo,
            gap_lo: g_lo,
            gap_hi: g_hi,
        });
    }
    if g_lo * g_hi > 0.0 {
        return Err(DriftLabError::NoSignChange { g_lo, g_hi });
    }

    let (mut lo, mut hi) = (lo0, hi0);
    let width_tol = rel_tol * hi0.max(1.0);
    loop {
        let mid = 0.5 * (lo + hi);
        let (g_mid, in_n, out_n) = gap_at(mid)?;
        evals += 1;
        let done = libm::fabs(g_mid) <= rel_tol * in_n
            || (hi - lo) <= width_tol
            || evals >= FIXED_POINT_MAX_EVALS;
        if done {
            return Ok(FixedPointResult {
                n_star: mid,
                gap_at_n_star: g_mid,
                bracket,
                evaluations: evals,
                input_mean_norm: in_n,
                output_mean_norm: out_n,
                gap_lo: g_lo,
                gap_hi: g_hi,
            });
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}
