//! Query/key drift dynamics across training checkpoints.
//!
//! For every checkpoint, a fixed probe batch is pushed through the model
//! with capture; per (layer, head) the query and key rows are pooled over
//! all sequences and positions. The pooled means trace alignment
//! trajectories (cosine, scalar product, norms), common or single-family
//! SVD bases give 2-D projections of the drift, and attention-row entropy
//! is tracked per layer.

use alloc::vec;
use alloc::vec::Vec;

use crate::model::ModelError;
use crate::model::{forward_model, ModelConfig};
use crate::numerics::rng::Rng;
use crate::numerics::stats::{cosine, shannon_entropy, StatsError};
use crate::numerics::svd::{thin_svd, SvdError};
use crate::numerics::tensor::{dot_f64, norm_f64, Tensor2D};
use crate::train::{Checkpoint, WindowSet};

#[derive(Debug, Clone, PartialEq)]
pub enum QkError {
    /// Checkpoints disagree on the model shape.
    ConfigMismatch { step: usize },
    NoCheckpoints,
    /// Trajectories need at least two checkpoints.
    TooFewSteps { n: usize },
    /// A mean query/key vector has zero norm.
    DegenerateSnapshot { step: usize, layer: usize, head: usize },
    /// Subsample fraction outside (0, 1].
    BadFraction { fraction: f64 },
    /// The projection pool ended up with fewer than two vectors.
    PoolTooSmall { n: usize },
    NoSuchHead { layer: usize, head: usize },
    Svd(SvdError),
    Model(ModelError),
    Stats(StatsError),
}

impl core::fmt::Display for QkError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QkError::ConfigMismatch { step } => {
                write!(f, "checkpoint at step {step} has a different model config")
            }
            QkError::NoCheckpoints => write!(f, "no checkpoints given"),
            QkError::TooFewSteps { n } => write!(f, "need at least 2 steps, got {n}"),
            QkError::DegenerateSnapshot { step, layer, head } => {
                write!(f, "zero-norm mean at step {step}, layer {layer}, head {head}")
            }
            QkError::BadFraction { fraction } => {
                write!(f, "subsample fraction {fraction} outside (0, 1]")
            }
            QkError::PoolTooSmall { n } => write!(f, "projection pool has only {n} vectors"),
            QkError::NoSuchHead { layer, head } => {
                write!(f, "no snapshot for layer {layer}, head {head}")
            }
            QkError::Svd(e) => write!(f, "{e}"),
            QkError::Model(e) => write!(f, "{e}"),
            QkError::Stats(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for QkError {}

impl From<SvdError> for QkError {
    fn from(e: SvdError) -> Self {
        QkError::Svd(e)
    }
}
impl From<ModelError> for QkError {
    fn from(e: ModelError) -> Self {
        QkError::Model(e)
    }
}
impl From<StatsError> for QkError {
    fn from(e: StatsError) -> Self {
        QkError::Stats(e)
    }
}

/// Pooled queries/keys of one (step, layer, head), with their means.
#[derive(Debug, Clone)]
pub struct QkSnapshot {
    pub step: usize,
    pub layer: usize,
    pub head: usize,
    /// All query rows over the probe batch, `tokens x d_head`.
    pub q_pool: Tensor2D<f32>,
    pub k_pool: Tensor2D<f32>,
    pub q_bar: Vec<f64>,
    pub k_bar: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyPoint {
    pub step: usize,
    pub layer: usize,
    pub mean_entropy: f64,
}

/// Snapshots for all selected heads across all checkpoints, plus the
/// per-layer attention entropy series.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub config: ModelConfig,
    pub steps: Vec<usize>,
    pub snapshots: Vec<QkSnapshot>,
    pub entropy: Vec<EntropyPoint>,
}

impl SnapshotSet {
    pub fn find(&self, step: usize, layer: usize, head: usize) -> Option<&QkSnapshot> {
        self.snapshots
            .iter()
            .find(|s| s.step == step && s.layer == layer && s.head == head)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HeadSelector {
    All,
    Chosen(Vec<(usize, usize)>),
}

impl HeadSelector {
    fn includes(&self, layer: usize, head: usize) -> bool {
        match self {
            HeadSelector::All => true,
            HeadSelector::Chosen(list) => list.contains(&(layer, head)),
        }
    }
}

/// Runs the probe batch through every checkpoint and pools captures.
/// The probe is identical across steps; the checkpoint is the only thing
/// that varies.
pub fn snapshot_checkpoints(
    checkpoints: &[Checkpoint<f32>],
    probe: &WindowSet,
    selector: &HeadSelector,
) -> Result<SnapshotSet, QkError> {
    let first = checkpoints.first().ok_or(QkError::NoCheckpoints)?;
    let config = first.params.config.clone();
    for c in checkpoints {
        if c.params.config != config {
            return Err(QkError::ConfigMismatch { step: c.step });
        }
    }

    let n_windows = probe.n_windows();
    let tokens_total = n_windows * probe.seq_len();
    let mut snapshots = Vec::new();
    let mut entropy = Vec::new();
    let mut steps = Vec::with_capacity(checkpoints.len());

    for ckpt in checkpoints {
        steps.push(ckpt.step);
        let mut pools: Vec<(Tensor2D<f32>, Tensor2D<f32>, usize)> = Vec::new();
        let mut pool_index: Vec<Vec<Option<usize>>> =
            vec![vec![None; config.n_heads]; config.n_layers];
        for (l, row) in pool_index.iter_mut().enumerate() {
            for (h, slot) in row.iter_mut().enumerate() {
                if selector.includes(l, h) {
                    *slot = Some(pools.len());
                    pools.push((
                        Tensor2D::zeros(tokens_total, config.d_head),
                        Tensor2D::zeros(tokens_total, config.d_head),
                        0,
                    ));
                }
            }
        }
        let mut layer_entropy = vec![0.0f64; config.n_layers];
        let mut layer_rows = vec![0usize; config.n_layers];

        for w in 0..n_windows {
            let out = forward_model(&ckpt.params, probe.window(w), true)?;
            let capture = out.capture.expect("capture requested");
            for (l, layer_cap) in capture.layers.iter().enumerate() {
                for (h, head) in layer_cap.heads.iter().enumerate() {
                    // Entropy over every head's rows, regardless of selector.
                    let mut row_buf: Vec<f64> = Vec::with_capacity(head.probs.cols());
                    for i in 0..head.probs.rows() {
                        row_buf.clear();
                        row_buf.extend(head.probs.row(i).iter().map(|&p| p as f64));
                        let total: f64 = row_buf.iter().sum();
                        for p in row_buf.iter_mut() {
                            *p /= total;
                        }
                        layer_entropy[l] +=
                            shannon_entropy(&row_buf).expect("attention row is a distribution");
                        layer_rows[l] += 1;
                    }
                    if let Some(pi) = pool_index[l][h] {
                        let (qp, kp, filled) = &mut pools[pi];
                        for i in 0..head.q.rows() {
                            qp.row_mut(*filled + i).copy_from_slice(head.q.row(i));
                            kp.row_mut(*filled + i).copy_from_slice(head.k.row(i));
                        }
                        *filled += head.q.rows();
                    }
                }
            }
        }

        for (l, row) in pool_index.iter().enumerate() {
            for (h, slot) in row.iter().enumerate() {
                if let Some(pi) = *slot {
                    let (q_pool, k_pool, filled) = core::mem::replace(
                        &mut pools[pi],
                        (Tensor2D::zeros(0, 0), Tensor2D::zeros(0, 0), 0),
                    );
                    debug_assert_eq!(filled, tokens_total);
                    let q_bar = q_pool.col_means_f64();
                    let k_bar = k_pool.col_means_f64();
                    snapshots.push(QkSnapshot {
                        step: ckpt.step,
                        layer: l,
                        head: h,
                        q_pool,
                        k_pool,
                        q_bar,
                        k_bar,
                    });
                }
            }
        }
        for l in 0..config.n_layers {
            entropy.push(EntropyPoint {
                step: ckpt.step,
                layer: l,
                mean_entropy: layer_entropy[l] / layer_rows[l].max(1) as f64,
            });
        }
    }

    Ok(SnapshotSet { config, steps, snapshots, entropy })
}

/// One point of the alignment trajectory of a head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub layer: usize,
    pub head: usize,
    pub cos: f64,
    pub dot: f64,
    pub q_norm: f64,
    pub k_norm: f64,
}

/// Alignment trajectories in step order plus the per-layer entropy series.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub points: Vec<TrajectoryPoint>,
    pub entropy: Vec<EntropyPoint>,
}

impl TrajectoryTable {
    /// Points of one head, in step order.
    pub fn head_series(&self, layer: usize, head: usize) -> Vec<&TrajectoryPoint> {
        self.points.iter().filter(|p| p.layer == layer && p.head == head).collect()
    }
}

/// Cosine, scalar product, and norms of the mean query/key per
/// (layer, head, step).
pub fn qk_alignment_trajectories(set: &SnapshotSet) -> Result<TrajectoryTable, QkError> {
    if set.steps.len() < 2 {
        return Err(QkError::TooFewSteps { n: set.steps.len() });
    }
    let mut points = Vec::with_capacity(set.snapshots.len());
    for s in &set.snapshots {
        let qn = norm_f64(&s.q_bar);
        let kn = norm_f64(&s.k_bar);
        if qn == 0.0 || kn == 0.0 {
            return Err(QkError::DegenerateSnapshot { step: s.step, layer: s.layer, head: s.head });
        }
        points.push(TrajectoryPoint {
            step: s.step,
            layer: s.layer,
            head: s.head,
            cos: cosine(&s.q_bar, &s.k_bar)?,
            dot: dot_f64(&s.q_bar, &s.k_bar),
            q_norm: qn,
            k_norm: kn,
        });
    }
    points.sort_by_key(|p| (p.layer, p.head, p.step));
    Ok(TrajectoryTable { points, entropy: set.entropy.clone() })
}

/// Per-layer mean attention entropy in step order.
pub fn entropy_trajectory(set: &SnapshotSet) -> Vec<EntropyPoint> {
    let mut out = set.entropy.clone();
    out.sort_by_key(|e| (e.layer, e.step));
    out
}

/// Per-layer trajectories of the mean query/key concatenated across heads.
pub fn concat_head_trajectories(set: &SnapshotSet) -> Result<Vec<(usize, usize, f64)>, QkError> {
    let mut out = Vec::new();
    for &step in &set.steps {
        for layer in 0..set.config.n_layers {
            let mut q_cat = Vec::with_capacity(set.config.d_model);
            let mut k_cat = Vec::with_capacity(set.config.d_model);
            for head in 0..set.config.n_heads {
                let snap = set
                    .find(step, layer, head)
                    .ok_or(QkError::NoSuchHead { layer, head })?;
                q_cat.extend_from_slice(&snap.q_bar);
                k_cat.extend_from_slice(&snap.k_bar);
            }
            out.push((step, layer, cosine(&q_cat, &k_cat)?));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SvdMode {
    /// Basis fit on the union of queries and keys across all steps.
    Union,
    QueriesOnly,
    KeysOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Query,
    Key,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjPoint {
    pub step: usize,
    pub family: Family,
    pub x: f64,
    pub y: f64,
}

/// A head's pooled representations projected to the top-2 right singular
/// basis of the selected pool.
#[derive(Debug, Clone)]
pub struct ProjectionSet {
    pub layer: usize,
    pub head: usize,
    pub mode: SvdMode,
    /// `d_head x 2`, orthonormal columns.
    pub basis: Tensor2D<f64>,
    /// Projected point clouds, subsampled to at most `max_points` per
    /// (step, family).
    pub points: Vec<ProjPoint>,
    /// Projected means, one per (step, family).
    pub means: Vec<ProjPoint>,
}

/// Fits the basis on a seeded uniform subsample (`fraction`) of the pooled
/// representations across all steps, then projects clouds and means.
pub fn svd_projection(
    set: &SnapshotSet,
    layer: usize,
    head: usize,
    mode: SvdMode,
    fraction: f64,
    rng: &mut Rng,
    max_points: usize,
) -> Result<ProjectionSet, QkError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(QkError::BadFraction { fraction });
    }
    let snaps: Vec<&QkSnapshot> = {
        let mut v: Vec<&QkSnapshot> = set
            .snapshots
            .iter()
            .filter(|s| s.layer == layer && s.head == head)
            .collect();
        v.sort_by_key(|s| s.step);
        v
    };
    if snaps.is_empty() {
        return Err(QkError::NoSuchHead { layer, head });
    }
    let d = set.config.d_head;

    // Assemble the fitting pool in (step, family, row) order.
    let mut pool_rows = 0usize;
    for s in &snaps {
        pool_rows += match mode {
            SvdMode::Union => s.q_pool.rows() + s.k_pool.rows(),
            SvdMode::QueriesOnly => s.q_pool.rows(),
            SvdMode::KeysOnly => s.k_pool.rows(),
        };
    }
    let take = ((pool_rows as f64 * fraction) as usize).max(2).min(pool_rows);
    if pool_rows < 2 {
        return Err(QkError::PoolTooSmall { n: pool_rows });
    }
    let picks = {
        let mut p = rng.distinct_indices(pool_rows, take);
        p.sort_unstable();
        p
    };

    let mut fit = Tensor2D::<f64>::zeros(picks.len(), d);
    {
        let mut pick_iter = picks.iter().peekable();
        let mut flat = 0usize;
        let mut out_row = 0usize;
        let push_pool = |pool: &Tensor2D<f32>,
                             flat: &mut usize,
                             out_row: &mut usize,
                             pick_iter: &mut core::iter::Peekable<core::slice::Iter<usize>>,
                             fit: &mut Tensor2D<f64>| {
            for i in 0..pool.rows() {
                if pick_iter.peek() == Some(&&*flat) {
                    pick_iter.next();
                    for (dst, &v) in fit.row_mut(*out_row).iter_mut().zip(pool.row(i)) {
                        *dst = v as f64;
                    }
                    *out_row += 1;
                }
                *flat += 1;
            }
        };
        for s in &snaps {
            if matches!(mode, SvdMode::Union | SvdMode::QueriesOnly) {
                push_pool(&s.q_pool, &mut flat, &mut out_row, &mut pick_iter, &mut fit);
            }
            if matches!(mode, SvdMode::Union | SvdMode::KeysOnly) {
                push_pool(&s.k_pool, &mut flat, &mut out_row, &mut pick_iter, &mut fit);
            }
        }
        debug_assert_eq!(out_row, picks.len());
    }

    let svd = thin_svd(&fit, 2.min(d))?;
    let basis = svd.v; // d x 2

    let project = |row: &[f64]| -> (f64, f64) {
        let mut x = 0.0;
        let mut y = 0.0;
        for (j, &v) in row.iter().enumerate() {
            x += v * basis.get(j, 0);
            if basis.cols() > 1 {
                y += v * basis.get(j, 1);
            }
        }
        (x, y)
    };

    let mut points = Vec::new();
    let mut means = Vec::new();
    for s in &snaps {
        for (family, pool, bar) in [
            (Family::Query, &s.q_pool, &s.q_bar),
            (Family::Key, &s.k_pool, &s.k_bar),
        ] {
            let n = pool.rows();
            let keep = max_points.min(n);
            let chosen = if keep == n {
                (0..n).collect::<Vec<_>>()
            } else {
                let mut c = rng.distinct_indices(n, keep);
                c.sort_unstable();
                c
            };
            for i in chosen {
                let row: Vec<f64> = pool.row(i).iter().map(|&v| v as f64).collect();
                let (x, y) = project(&row);
                points.push(ProjPoint { step: s.step, family, x, y });
            }
            let (x, y) = project(bar);
            means.push(ProjPoint { step: s.step, family, x, y });
        }
    }

    Ok(ProjectionSet { layer, head, mode, basis, points, means })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadLabel {
    SimilarDirection,
    OppositeDirection,
    Unaligned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadDynamics {
    pub layer: usize,
    pub head: usize,
    pub label: HeadLabel,
    pub final_cos: f64,
    /// First step at which the trajectory crossed the threshold on the side
    /// it ends on; `None` for unaligned heads.
    pub onset_step: Option<usize>,
}

pub const DEFAULT_ALIGNMENT_THRESHOLD: f64 = 0.5;

/// Labels each head by the final cosine between its mean query and key.
pub fn classify_head_dynamics(table: &TrajectoryTable, threshold: f64) -> Vec<HeadDynamics> {
    let mut keys: Vec<(usize, usize)> = table.points.iter().map(|p| (p.layer, p.head)).collect();
    keys.sort_unstable();
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for (layer, head) in keys {
        let series = table.head_series(layer, head);
        let final_cos = series.last().expect("non-empty series").cos;
        let (label, sign) = if final_cos > threshold {
            (HeadLabel::SimilarDirection, 1.0)
        } else if final_cos < -threshold {
            (HeadLabel::OppositeDirection, -1.0)
        } else {
            (HeadLabel::Unaligned, 0.0)
        };
        let onset_step = if sign == 0.0 {
            None
        } else {
            series.iter().find(|p| p.cos * sign > threshold).map(|p| p.step)
        };
        out.push(HeadDynamics { layer, head, label, final_cos, onset_step });
    }
    out
}
