//! Acceptance suite: one test per numbered criterion. Each prints a
//! `acceptance NN (<name>): PASS` line with its headline measurement and
//! elapsed time (visible with `--nocapture`).
//!
//! Shared heavy artifacts (default-block sweeps, toy training runs) are
//! computed once behind `OnceLock`s and reused across criteria.

use std::sync::OnceLock;
use std::time::Instant;

use anisolab::corpus::synthetic_text;
use anisolab::dump::{read_dump, write_dump, ActivationDump, Dtype};
use anisolab::checkpoint::{read_checkpoint, read_checkpoint_for, write_checkpoint};
use anisolab::parallel::map_indexed;
use anisolab_core::driftlab::{bias_sweep, find_fixed_point, SweepRecord, SweepSettings};
use anisolab_core::metrics::{
    avg_pairwise_cosine_sampled, isotropic_cosine_quantile,
};
use anisolab_core::model::{init_params, ModelConfig, TransformerParams};
use anisolab_core::numerics::ops::gaussian_matrix;
use anisolab_core::numerics::special::student_t_two_sided_p;
use anisolab_core::numerics::stats::{pearson_test, spearman_test};
use anisolab_core::qk::{
    qk_alignment_trajectories, snapshot_checkpoints, HeadSelector, TrajectoryTable,
};
use anisolab_core::train::{
    loss_and_grads, mlm_mask, resume, train, Checkpoint, TokenBatch, TrainConfig, WindowSet,
    VOCAB_SIZE,
};
use anisolab_core::{Rng, Tensor2D};

fn pass(criterion: usize, name: &str, detail: String, t0: Instant) {
    println!(
        "acceptance {criterion:02} ({name}): PASS - {detail} [{:.1}s]",
        t0.elapsed().as_secs_f64()
    );
}

// ---------------------------------------------------------------------------
// Criterion 1: gradient oracle.
// ---------------------------------------------------------------------------

#[test]
fn c01_gradient_oracle() {
    let t0 = Instant::now();
    let cfg = ModelConfig::new(2, 64, 4, 256, VOCAB_SIZE, 32).unwrap();
    let params: TransformerParams<f64> = init_params(&cfg, 3);

    let mut data_rng = Rng::new(17);
    let ids: Vec<u16> = (0..2 * 32).map(|_| data_rng.index(256) as u16).collect();
    let batch = mlm_mask(&TokenBatch::new(2, 32, ids), 0.25, &mut data_rng);

    let (_, grads) = loss_and_grads(&params, &batch).unwrap();

    let mut rng = Rng::new(44);
    let h = 1e-5;
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    while checked < 200 {
        let ti = rng.index(params.n_tensors());
        let t = params.tensor(ti);
        let ei = rng.index(t.data().len());
        // Positional rows beyond the batch's sequence length receive no
        // gradient at all; both sides are exactly zero there.
        if ti == 1 && ei / cfg.d_model >= 32 {
            continue;
        }
        let mut plus = params.clone();
        plus.tensor_mut(ti).data_mut()[ei] += h;
        let mut minus = params.clone();
        minus.tensor_mut(ti).data_mut()[ei] -= h;
        let (lp, _) = loss_and_grads(&plus, &batch).unwrap();
        let (lm, _) = loss_and_grads(&minus, &batch).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let an = grads.tensor(ti).data()[ei];
        // Floor keeps near-zero coordinates (finite differences bottom out
        // at loss roundoff / h) from dominating the relative comparison.
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
        assert!(
            rel < 1e-4,
            "coordinate {ei} of {} ({}): fd={fd:e}, analytic={an:e}, rel={rel:e}",
            params.tensor_name(ti),
            ti
        );
        max_rel = max_rel.max(rel);
        checked += 1;
    }
    pass(1, "gradient oracle", format!("200 coordinates, max rel err {max_rel:.2e}"), t0);
}

// ---------------------------------------------------------------------------
// Criterion 2: pair-sampling estimator vs brute force.
// ---------------------------------------------------------------------------

#[test]
fn c02_estimator_oracle() {
    let t0 = Instant::now();
    let mut hits = 0usize;
    for seed in 0..100u64 {
        let mut rng = Rng::derive(900, &[seed]);
        let n = 10 + rng.index(191); // up to 200 vectors
        let d = 4 + rng.index(28);
        let drift = rng.next_f64() * 2.0;
        let mut vectors = gaussian_matrix(&mut rng, n, d, 0.0, 1.0);
        for v in vectors.data_mut() {
            *v += drift;
        }

        // Independent O(n^2) oracle, written out longhand.
        let mut exhaustive = 0.0f64;
        let mut n_pairs = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (vectors.row(i), vectors.row(j));
                let mut dot = 0.0;
                let mut na = 0.0;
                let mut nb = 0.0;
                for k in 0..d {
                    dot += a[k] * b[k];
                    na += a[k] * a[k];
                    nb += b[k] * b[k];
                }
                exhaustive += dot / (na.sqrt() * nb.sqrt());
                n_pairs += 1;
            }
        }
        exhaustive /= n_pairs as f64;

        let mut sample_rng = Rng::derive(901, &[seed]);
        let est = avg_pairwise_cosine_sampled(&vectors, 2000, &mut sample_rng).unwrap();
        if (est.mean - exhaustive).abs() < 3.0 * est.stderr.max(1e-12) {
            hits += 1;
        }
    }
    assert!(hits >= 99, "sampled estimate within 3 stderr in only {hits}/100 sets");
    pass(2, "estimator oracle", format!("{hits}/100 sets within 3 stderr"), t0);
}

// ---------------------------------------------------------------------------
// Criterion 3: isotropic baseline vs Monte Carlo.
// ---------------------------------------------------------------------------

#[test]
fn c03_isotropic_baseline() {
    let t0 = Instant::now();
    // Monte-Carlo oracle: a million cosine draws between independent
    // standard normal pairs per dimension.
    for &d in &[2usize, 3, 16, 64, 256] {
        let mut rng = Rng::derive(77, &[d as u64]);
        let n = 1_000_000usize;
        let mut cosines = Vec::with_capacity(n);
        for _ in 0..n {
            let mut dot = 0.0f64;
            let mut na = 0.0f64;
            let mut nb = 0.0f64;
            for _ in 0..d {
                let x = rng.normal();
                let y = rng.normal();
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            cosines.push(dot / (na.sqrt() * nb.sqrt()));
        }
        cosines.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mc = cosines[(0.95 * n as f64) as usize];
        let analytic = isotropic_cosine_quantile(d, 0.95).unwrap();
        assert!(
            (mc - analytic).abs() < 0.01,
            "d={d}: analytic {analytic:.4} vs monte-carlo {mc:.4}"
        );
        if d == 3 {
            assert!((analytic - 0.900).abs() < 0.005, "d=3 quantile {analytic}");
        }
    }
    let mut prev = f64::INFINITY;
    for k in 1..=10 {
        let q = isotropic_cosine_quantile(1usize << k, 0.95).unwrap();
        assert!(q < prev, "quantile not strictly decreasing at d={}", 1usize << k);
        prev = q;
    }
    pass(3, "isotropic baseline", "5 dims within 0.01 of monte carlo; strictly decreasing".into(), t0);
}

// ---------------------------------------------------------------------------
// Criteria 4-7 share the default untrained block.
// ---------------------------------------------------------------------------

fn default_block_cfg() -> ModelConfig {
    ModelConfig::new(1, 768, 12, 3072, 30_522, 512).unwrap()
}

const DEFAULT_NORMS: [f64; 8] = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];

static SWEEPS: [OnceLock<Vec<SweepRecord>>; 3] = [OnceLock::new(), OnceLock::new(), OnceLock::new()];

fn default_sweep(seed: u64) -> &'static [SweepRecord] {
    SWEEPS[seed as usize].get_or_init(|| {
        let cfg = default_block_cfg();
        let params: TransformerParams<f32> = init_params(&cfg, seed);
        let mut rng = Rng::derive(seed, &[0xACC]);
        bias_sweep(
            &cfg,
            &params.layers[0],
            &params.embedding,
            &DEFAULT_NORMS,
            seed,
            &mut rng,
            &SweepSettings::default(),
        )
        .unwrap()
    })
}

fn record_at(records: &[SweepRecord], n: f64) -> &SweepRecord {
    records.iter().find(|r| r.bias_norm == n).expect("norm level present")
}

#[test]
fn c04_fixed_point() {
    let t0 = Instant::now();
    let cfg = default_block_cfg();
    let params: TransformerParams<f32> = init_params(&cfg, 0);
    let mut rng = Rng::derive(0, &[0xF1D0]);
    let r = find_fixed_point(
        &cfg,
        &params.layers[0],
        &params.embedding,
        (0.0, 200.0),
        1e-3,
        0,
        &mut rng,
        &SweepSettings::default(),
    )
    .unwrap();
    assert!(r.gap_lo > 0.0, "g(0) = {} not positive", r.gap_lo);
    assert!(r.gap_hi < 0.0, "g(200) = {} not negative", r.gap_hi);
    assert!(
        r.gap_at_n_star.abs() <= 1e-3 * r.input_mean_norm,
        "|g(N*)| = {} above tolerance {}",
        r.gap_at_n_star.abs(),
        1e-3 * r.input_mean_norm
    );
    assert!(
        (5.0..=120.0).contains(&r.n_star),
        "N* = {} outside the order-sqrt(d) window",
        r.n_star
    );
    pass(
        4,
        "norm fixed point",
        format!(
            "N* = {:.2}, |g| = {:.2e} <= {:.2e}, {} evaluations",
            r.n_star,
            r.gap_at_n_star.abs(),
            1e-3 * r.input_mean_norm,
            r.evaluations
        ),
        t0,
    );
}

#[test]
fn c05_softmax_sharpening_three_seeds() {
    let t0 = Instant::now();
    let mut details = Vec::new();
    for seed in 0..3u64 {
        let records = default_sweep(seed);
        let base = record_at(records, 0.0).softmax;
        let high = record_at(records, 50.0).softmax;
        assert!(
            high.seq_max > base.seq_max,
            "seed {seed}: per-sequence max did not rise ({} -> {})",
            base.seq_max,
            high.seq_max
        );
        assert!(
            high.seq_min < base.seq_min,
            "seed {seed}: per-sequence min did not fall ({} -> {})",
            base.seq_min,
            high.seq_min
        );
        assert!(
            high.row_entropy < base.row_entropy,
            "seed {seed}: row entropy did not fall ({} -> {})",
            base.row_entropy,
            high.row_entropy
        );
        details.push(format!(
            "seed {seed}: entropy -{:.2e}, seq max +{:.2e}",
            base.row_entropy - high.row_entropy,
            high.seq_max - base.seq_max
        ));
    }
    pass(5, "softmax sharpening", details.join("; "), t0);
}

#[test]
fn c06_output_cosine_dominance() {
    let t0 = Instant::now();
    let records = default_sweep(0);
    let mut worst = f64::INFINITY;
    for r in records {
        let gap = r.output_avg_cosine.mean - r.input_avg_cosine.mean;
        worst = worst.min(gap);
        assert!(
            r.output_avg_cosine.mean >= r.input_avg_cosine.mean - 0.02,
            "N = {}: output cosine {:.4} below input {:.4} - 0.02",
            r.bias_norm,
            r.output_avg_cosine.mean,
            r.input_avg_cosine.mean
        );
    }
    pass(6, "output cosine dominance", format!("worst output-input gap {worst:+.2e}"), t0);
}

#[test]
fn c07_qk_norm_growth() {
    let t0 = Instant::now();
    let records = default_sweep(0);
    let base = record_at(records, 0.0);
    let high = record_at(records, 50.0);
    let n_heads = base.heads.len();
    let grew = (0..n_heads)
        .filter(|&h| {
            high.heads[h].q_mean_norm > base.heads[h].q_mean_norm
                && high.heads[h].k_mean_norm > base.heads[h].k_mean_norm
        })
        .count();
    assert!(
        grew as f64 >= 0.9 * n_heads as f64,
        "query/key norms grew for only {grew}/{n_heads} heads"
    );
    pass(7, "query/key norm growth", format!("{grew}/{n_heads} heads grew"), t0);
}

// ---------------------------------------------------------------------------
// Criterion 8: toy training dynamics (plus the multi-seed table).
// ---------------------------------------------------------------------------

struct ToyRun {
    losses: Vec<f64>,
    table: TrajectoryTable,
    /// Kept only for the reference seed (snapshot pools are large).
    set: Option<anisolab_core::qk::SnapshotSet>,
}

static TOY_TOKENS: OnceLock<Vec<u16>> = OnceLock::new();

/// 1 MiB of training text plus a held-out probe slice at the end.
fn toy_tokens() -> &'static [u16] {
    TOY_TOKENS.get_or_init(|| {
        synthetic_text(0xA15, (1 << 20) + 128 * 64).iter().map(|&b| b as u16).collect()
    })
}

fn toy_run(seed: u64) -> ToyRun {
    let tokens = toy_tokens();
    let train_windows = WindowSet::new(&tokens[..1 << 20], 64);
    let probe = WindowSet::new(&tokens[1 << 20..], 64);
    assert_eq!(probe.n_windows(), 128);

    let cfg = TrainConfig::toy_reference(seed);
    let mut losses = Vec::with_capacity(cfg.steps);
    let checkpoints: Vec<Checkpoint<f32>> =
        train(&cfg, &train_windows, &mut |info| losses.push(info.loss)).unwrap();
    assert_eq!(checkpoints.last().unwrap().step, 5000);

    let set = snapshot_checkpoints(&checkpoints, &probe, &HeadSelector::All).unwrap();
    let table = qk_alignment_trajectories(&set).unwrap();
    ToyRun { losses, table, set: (seed == 0).then_some(set) }
}

fn mean_abs_at(table: &TrajectoryTable, step: usize, f: impl Fn(&anisolab_core::qk::TrajectoryPoint) -> f64) -> f64 {
    let vals: Vec<f64> =
        table.points.iter().filter(|p| p.step == step).map(|p| f(p).abs()).collect();
    assert!(!vals.is_empty());
    vals.iter().sum::<f64>() / vals.len() as f64
}

#[test]
fn c08_toy_training_dynamics() {
    let t0 = Instant::now();
    let uniform = (VOCAB_SIZE as f64).ln();

    // Reference run, seed 0.
    let reference = toy_run(0);
    let first_500 = &reference.losses[..500];
    let last_500 = &reference.losses[reference.losses.len() - 500..];
    let final_loss = last_500.iter().sum::<f64>() / 500.0;
    let initial_loss = first_500.iter().sum::<f64>() / 500.0;
    assert!(
        final_loss < uniform - 1.0,
        "final loss {final_loss:.3} not a nat below uniform {uniform:.3}"
    );
    assert!(final_loss < initial_loss, "loss did not decrease");

    let cos0 = mean_abs_at(&reference.table, 0, |p| p.cos);
    let cos_final = mean_abs_at(&reference.table, 5000, |p| p.cos);
    assert!(
        cos_final > cos0,
        "mean |cos(qbar, kbar)| did not grow: {cos0:.3} -> {cos_final:.3}"
    );
    let dot0 = mean_abs_at(&reference.table, 0, |p| p.dot);
    let dot_final = mean_abs_at(&reference.table, 5000, |p| p.dot);
    assert!(dot_final > dot0, "mean |qbar.kbar| did not grow: {dot0:.3e} -> {dot_final:.3e}");

    let n_layers = 2usize;
    for layer in 0..n_layers {
        let h0 = reference
            .table
            .entropy
            .iter()
            .find(|e| e.step == 0 && e.layer == layer)
            .unwrap()
            .mean_entropy;
        let h_final = reference
            .table
            .entropy
            .iter()
            .find(|e| e.step == 5000 && e.layer == layer)
            .unwrap()
            .mean_entropy;
        assert!(
            h_final < h0,
            "layer {layer}: attention entropy did not decay ({h0:.3} -> {h_final:.3})"
        );
    }

    // Projection-basis stability: the top-2 SVD basis fit on a 20%
    // subsample spans the same plane as the full-pool basis.
    let set = reference.set.as_ref().unwrap();
    let mut worst_angle = 0.0f64;
    for layer in 0..2 {
        for head in 0..4 {
            let mut rng_full = Rng::derive(42, &[1, layer as u64, head as u64]);
            let full = anisolab_core::qk::svd_projection(
                set,
                layer,
                head,
                anisolab_core::qk::SvdMode::Union,
                1.0,
                &mut rng_full,
                1,
            )
            .unwrap();
            let mut rng_sub = Rng::derive(42, &[2, layer as u64, head as u64]);
            let sub = anisolab_core::qk::svd_projection(
                set,
                layer,
                head,
                anisolab_core::qk::SvdMode::Union,
                0.2,
                &mut rng_sub,
                1,
            )
            .unwrap();
            // Largest principal angle between the two 2-D spans.
            let m = full.basis.matmul_at(&sub.basis);
            let sv = anisolab_core::numerics::svd::thin_svd(&m, 2).unwrap();
            let angle = sv.s[1].clamp(-1.0, 1.0).acos().to_degrees();
            worst_angle = worst_angle.max(angle);
            assert!(
                angle < 10.0,
                "layer {layer} head {head}: subsampled basis {angle:.2} degrees off"
            );
        }
    }

    // Seeds 1-4 for the multi-seed cosine table; seed 0 is reused.
    let others = map_indexed(2, 4, |i| {
        let run = toy_run(i as u64 + 1);
        let c0 = mean_abs_at(&run.table, 0, |p| p.cos);
        let cf = mean_abs_at(&run.table, 5000, |p| p.cos);
        (c0, cf)
    });
    let mut passes = usize::from(cos_final > cos0);
    let mut parts = vec![format!("seed 0: {cos0:.3}->{cos_final:.3}")];
    for (i, (c0, cf)) in others.iter().enumerate() {
        if cf > c0 {
            passes += 1;
        }
        parts.push(format!("seed {}: {c0:.3}->{cf:.3}", i + 1));
    }
    assert!(passes >= 4, "cosine criterion passed for only {passes}/5 seeds ({parts:?})");

    pass(
        8,
        "toy training dynamics",
        format!(
            "loss {initial_loss:.3}->{final_loss:.3} (uniform {uniform:.3}); {}; {passes}/5 seeds; basis angle <= {worst_angle:.2} deg",
            parts.join(", ")
        ),
        t0,
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: format round-trips and file-based resume.
// ---------------------------------------------------------------------------

#[test]
fn c09_format_round_trips() {
    let t0 = Instant::now();
    let dir = tempfile::tempdir().unwrap();

    for seed in 0..50u64 {
        let mut rng = Rng::derive(4000, &[seed]);
        let n_layers = 1 + rng.index(4);
        let d = 1 + rng.index(24);
        let dtype = if rng.next_f64() < 0.5 { Dtype::F32 } else { Dtype::F64 };
        let layers: Vec<Tensor2D<f64>> = (0..n_layers)
            .map(|_| {
                let rows = 1 + rng.index(30);
                let mut t = gaussian_matrix(&mut rng, rows, d, 0.0, 3.0);
                if dtype == Dtype::F32 {
                    t = t.map(|v| v as f32 as f64);
                }
                t
            })
            .collect();
        let dump = ActivationDump::new("rt", "text-bytes", dtype, "", layers);
        let p1 = dir.path().join(format!("d{seed}a"));
        let p2 = dir.path().join(format!("d{seed}b"));
        write_dump(&p1, &dump).unwrap();
        let back = read_dump(&p1).unwrap();
        write_dump(&p2, &back).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "dump {seed} not bit-identical"
        );
    }

    for seed in 0..50u64 {
        let mut rng = Rng::derive(4100, &[seed]);
        let heads = 1 + rng.index(3);
        let cfg = ModelConfig::new(
            1 + rng.index(2),
            heads * (4 + rng.index(4)),
            heads,
            8 + rng.index(24),
            VOCAB_SIZE,
            4 + rng.index(12),
        )
        .unwrap();
        let params: TransformerParams<f32> = init_params(&cfg, seed);
        let mut adam = anisolab_core::train::AdamState::new(&params);
        for m in adam.m.iter_mut().chain(adam.v.iter_mut()) {
            for v in m.data_mut() {
                *v = rng.normal() as f32;
            }
        }
        adam.t = rng.index(1000);
        let ckpt = Checkpoint { step: rng.index(10_000), params, adam, loss_avg: rng.normal() };
        let p1 = dir.path().join(format!("c{seed}a"));
        let p2 = dir.path().join(format!("c{seed}b"));
        write_checkpoint(&p1, &ckpt, seed).unwrap();
        let back = read_checkpoint(&p1).unwrap();
        write_checkpoint(&p2, &back.checkpoint, back.seed).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap(),
            "checkpoint {seed} not bit-identical"
        );
    }

    // Mid-run resume through files matches the uninterrupted run.
    let cfg = TrainConfig {
        model: ModelConfig::new(1, 16, 2, 32, VOCAB_SIZE, 16).unwrap(),
        steps: 200,
        batch_size: 2,
        seq_len: 16,
        learning_rate: 1e-3,
        adam_beta1: 0.9,
        adam_beta2: 0.999,
        adam_eps: 1e-8,
        mask_rate: 0.2,
        warmup_steps: 0,
        checkpoint_steps: vec![0, 100, 200],
        seed: 5,
    };
    let tokens: Vec<u16> = synthetic_text(9, 4096).iter().map(|&b| b as u16).collect();
    let windows = WindowSet::new(&tokens, 16);
    let full = train::<f32>(&cfg, &windows, &mut |_| {}).unwrap();
    let mid = full.iter().find(|c| c.step == 100).unwrap();
    let p = dir.path().join("resume.ckpt");
    write_checkpoint(&p, mid, cfg.seed).unwrap();
    let loaded = read_checkpoint_for(&p, &cfg.model).unwrap();
    let tail = resume::<f32>(&cfg, &windows, loaded.checkpoint, &mut |_| {}).unwrap();
    let a = full.last().unwrap();
    let b = tail.last().unwrap();
    for i in 0..a.params.n_tensors() {
        let xa: Vec<u32> = a.params.tensor(i).data().iter().map(|v| v.to_bits()).collect();
        let xb: Vec<u32> = b.params.tensor(i).data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(xa, xb, "file-based resume diverged in tensor {i}");
    }

    pass(9, "format round trips", "50 dumps + 50 checkpoints bit-identical; resume exact".into(), t0);
}

// ---------------------------------------------------------------------------
// Criterion 10: statistics validation.
// ---------------------------------------------------------------------------

fn ks_distance_from_uniform(mut ps: Vec<f64>) -> f64 {
    ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = ps.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &p) in ps.iter().enumerate() {
        d = d.max((p - i as f64 / n).abs());
        d = d.max((p - (i as f64 + 1.0) / n).abs());
    }
    d
}

#[test]
fn c10_statistics_validation() {
    let t0 = Instant::now();

    // Hand-computed fixed examples to 1e-12.
    let (r, p) = pearson_test(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap();
    assert!((r - 1.0).abs() < 1e-12 && p.abs() < 1e-12);
    let (r, _) = pearson_test(&[1.0, 2.0, 3.0, 4.0], &[4.0, 3.0, 2.0, 1.0]).unwrap();
    assert!((r + 1.0).abs() < 1e-12);
    let mut rng = Rng::new(0);
    let (rho, _) = spearman_test(&[1.0, 2.0, 3.0], &[1.0, 4.0, 9.0], 100, &mut rng).unwrap();
    assert!((rho - 1.0).abs() < 1e-12);
    let (rho, _) =
        spearman_test(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0], 100, &mut rng).unwrap();
    assert!((rho - 0.8).abs() < 1e-12);
    // 12 layers, identity ranks with one adjacent swap:
    // rho = 1 - 6*2 / (12 * 143).
    let mut x: Vec<f64> = (0..12).map(|i| i as f64).collect();
    let mut y = x.clone();
    y.swap(5, 6);
    x[0] += 0.0;
    let (rho, _) = spearman_test(&x, &y, 100, &mut rng).unwrap();
    assert!((rho - (1.0 - 12.0 / 1716.0)).abs() < 1e-12, "one-swap rho {rho}");

    // Null p-value uniformity, 10 000 synthetic nulls each.
    let pearson_ps: Vec<f64> = (0..10_000u64)
        .map(|s| {
            let mut rng = Rng::derive(600, &[s]);
            let x: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.normal()).collect();
            pearson_test(&x, &y).unwrap().1
        })
        .collect();
    let d_pearson = ks_distance_from_uniform(pearson_ps);
    assert!(d_pearson < 0.05, "pearson null p-values not uniform: KS = {d_pearson:.4}");

    let spearman_ps: Vec<f64> = (0..10_000u64)
        .map(|s| {
            let mut rng = Rng::derive(601, &[s]);
            let x: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
            let y: Vec<f64> = (0..12).map(|_| rng.normal()).collect();
            let mut perm_rng = Rng::derive(602, &[s]);
            spearman_test(&x, &y, 999, &mut perm_rng).unwrap().1
        })
        .collect();
    let d_spearman = ks_distance_from_uniform(spearman_ps);
    assert!(d_spearman < 0.05, "spearman null p-values not uniform: KS = {d_spearman:.4}");

    // The t-tail itself against its dof=2 closed form.
    for &t in &[0.3f64, 1.1, 2.7] {
        let want = 1.0 - t / (2.0 + t * t).sqrt();
        assert!((student_t_two_sided_p(t, 2.0) - want).abs() < 1e-12);
    }

    pass(
        10,
        "statistics validation",
        format!("hand values exact; KS pearson {d_pearson:.4}, spearman {d_spearman:.4}"),
        t0,
    );
}
