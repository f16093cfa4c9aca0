//! Query/key dynamics across checkpoints: alignment trajectories, SVD
//! projections, entropy decay, and the multi-seed stability table.

use std::path::PathBuf;
use std::time::Instant;

use anisolab_core::qk::{
    classify_head_dynamics, concat_head_trajectories, qk_alignment_trajectories,
    snapshot_checkpoints, svd_projection, Family, HeadLabel, HeadSelector, SnapshotSet, SvdMode,
    TrajectoryTable,
};
use anisolab_core::train::{Checkpoint, WindowSet};
use anisolab_core::Rng;
use anyhow::Context;
use serde::Serialize;

use crate::corpus::load_corpus;
use crate::manifest::RunManifest;
use crate::parallel::map_indexed;
use crate::pipelines::measure::write_json;
use crate::pipelines::traintoy::load_checkpoint_dir;
use crate::report::{KeyValue, Report};

pub struct QkTrackOptions {
    pub checkpoints: PathBuf,
    pub probe: PathBuf,
    pub probe_seqs: usize,
    pub svd: SvdMode,
    pub subsample: f64,
    pub threshold: f64,
    pub max_points: usize,
    pub seed: u64,
    /// Multi-seed mode: `checkpoints/seed<k>/` per entry.
    pub seeds: Option<Vec<u64>>,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for QkTrackOptions {
    fn default() -> Self {
        Self {
            checkpoints: PathBuf::new(),
            probe: PathBuf::new(),
            probe_seqs: 128,
            svd: SvdMode::Union,
            subsample: 0.2,
            threshold: anisolab_core::qk::DEFAULT_ALIGNMENT_THRESHOLD,
            max_points: 512,
            seed: 0,
            seeds: None,
            threads: 1,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Serialize)]
struct HeadDynamicsJson {
    layer: usize,
    head: usize,
    label: String,
    final_cos: f64,
    onset_step: Option<usize>,
}

fn label_str(l: HeadLabel) -> &'static str {
    match l {
        HeadLabel::SimilarDirection => "similar-direction",
        HeadLabel::OppositeDirection => "opposite-direction",
        HeadLabel::Unaligned => "unaligned",
    }
}

fn family_str(f: Family) -> &'static str {
    match f {
        Family::Query => "Q",
        Family::Key => "K",
    }
}

fn mode_str(m: SvdMode) -> &'static str {
    match m {
        SvdMode::Union => "union",
        SvdMode::QueriesOnly => "q",
        SvdMode::KeysOnly => "k",
    }
}

/// File tag per projection mode: the union basis is the main figure; the
/// single-family bases are the alternative-projection set.
fn proj_file_names(mode: SvdMode) -> (String, String) {
    match mode {
        SvdMode::Union => ("fig10_proj.csv".into(), "fig10_means.csv".into()),
        SvdMode::QueriesOnly => ("fig17-20_proj_q.csv".into(), "fig17-20_means_q.csv".into()),
        SvdMode::KeysOnly => ("fig17-20_proj_k.csv".into(), "fig17-20_means_k.csv".into()),
    }
}

/// Builds the probe window set: the first `probe_seqs` windows of the file.
pub fn load_probe(path: &std::path::Path, seq_len: usize, probe_seqs: usize) -> anyhow::Result<WindowSet> {
    let tokens = load_corpus(path)?;
    let windows = WindowSet::new(&tokens, seq_len);
    if windows.n_windows() < probe_seqs {
        anyhow::bail!(
            "probe corpus has {} windows of length {seq_len}, need {probe_seqs}",
            windows.n_windows()
        );
    }
    let mut ids = Vec::with_capacity(probe_seqs * seq_len);
    for w in 0..probe_seqs {
        ids.extend_from_slice(windows.window(w));
    }
    Ok(WindowSet::new(&ids, seq_len))
}

pub struct QkTrackOutcome {
    pub table: TrajectoryTable,
}

pub fn run(opts: &QkTrackOptions) -> anyhow::Result<QkTrackOutcome> {
    let t0 = Instant::now();
    super::ensure_out_dir(&opts.out)?;

    if let Some(seeds) = &opts.seeds {
        return run_seeds(opts, seeds, t0);
    }

    let checkpoints = load_checkpoint_dir(&opts.checkpoints)?;
    let seq_len = checkpoints[0].params.config.max_seq_len;
    let probe = load_probe(&opts.probe, seq_len, opts.probe_seqs)?;
    let set = snapshot_checkpoints(&checkpoints, &probe, &HeadSelector::All)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let table = qk_alignment_trajectories(&set).map_err(|e| anyhow::anyhow!("{e}"))?;

    write_trajectory_reports(&opts.out, &table)?;
    write_projections(opts, &set)?;

    let dynamics: Vec<HeadDynamicsJson> = classify_head_dynamics(&table, opts.threshold)
        .into_iter()
        .map(|d| HeadDynamicsJson {
            layer: d.layer,
            head: d.head,
            label: label_str(d.label).to_string(),
            final_cos: d.final_cos,
            onset_step: d.onset_step,
        })
        .collect();
    write_json(&opts.out.join("head_dynamics.json"), &dynamics)?;

    let (proj_name, means_name) = proj_file_names(opts.svd);
    let mut manifest = RunManifest::new("qk-track");
    manifest
        .arg("checkpoints", opts.checkpoints.display())
        .arg("probe", opts.probe.display())
        .arg("probe-seqs", opts.probe_seqs)
        .arg("svd", mode_str(opts.svd))
        .arg("subsample", opts.subsample)
        .arg("threshold", opts.threshold)
        .arg("max-points", opts.max_points)
        .seed("seed", opts.seed)
        .output("fig11_cosine.csv")
        .output("fig12_dot.csv")
        .output("fig13_entropy.csv")
        .output(&proj_name)
        .output(&means_name)
        .output("head_dynamics.json")
        .note("probe batch is bit-identical across checkpoints")
        .note("svd basis fit on a seeded uniform subsample of pooled representations");
    manifest.threads = opts.threads;
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    manifest.write(&opts.out.join("run_manifest.json"))?;

    Ok(QkTrackOutcome { table })
}

fn write_trajectory_reports(out: &std::path::Path, table: &TrajectoryTable) -> anyhow::Result<()> {
    let mut fig11 = Report::new("qk-track", "fig11", &["step", "layer", "head"]);
    let mut fig12 = Report::new("qk-track", "fig12", &["step", "layer", "head"]);
    for p in &table.points {
        let key = vec![
            KeyValue::Int(p.step as i64),
            KeyValue::Int(p.layer as i64),
            KeyValue::Int(p.head as i64),
        ];
        fig11.push(key.clone(), "cos_qbar_kbar", p.cos, None, "cosine")?;
        fig12.push(key.clone(), "dot_qbar_kbar", p.dot, None, "score")?;
        fig12.push(key.clone(), "qbar_norm", p.q_norm, None, "l2")?;
        fig12.push(key, "kbar_norm", p.k_norm, None, "l2")?;
    }
    fig11.write_csv(&out.join("fig11_cosine.csv"))?;
    fig12.write_csv(&out.join("fig12_dot.csv"))?;

    let mut fig13 = Report::new("qk-track", "fig13", &["step", "layer"]);
    for e in &table.entropy {
        fig13.push(
            vec![KeyValue::Int(e.step as i64), KeyValue::Int(e.layer as i64)],
            "mean_row_entropy",
            e.mean_entropy,
            None,
            "nats",
        )?;
    }
    fig13.write_csv(&out.join("fig13_entropy.csv"))?;
    Ok(())
}

fn write_projections(opts: &QkTrackOptions, set: &SnapshotSet) -> anyhow::Result<()> {
    let (proj_name, means_name) = proj_file_names(opts.svd);
    let figure = match opts.svd {
        SvdMode::Union => "fig10",
        _ => "fig17-20",
    };
    let mut proj =
        Report::new("qk-track", figure, &["layer", "head", "step", "family", "point"]);
    let mut means = Report::new("qk-track", figure, &["layer", "head", "step", "family"]);
    for layer in 0..set.config.n_layers {
        for head in 0..set.config.n_heads {
            let mut rng = Rng::derive(opts.seed, &[0x59D, layer as u64, head as u64]);
            let pset = svd_projection(
                set,
                layer,
                head,
                opts.svd,
                opts.subsample,
                &mut rng,
                opts.max_points,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let mut counters: std::collections::BTreeMap<(usize, &str), i64> =
                std::collections::BTreeMap::new();
            for p in &pset.points {
                let fam = family_str(p.family);
                let idx = counters.entry((p.step, fam)).or_insert(0);
                let key = vec![
                    KeyValue::Int(layer as i64),
                    KeyValue::Int(head as i64),
                    KeyValue::Int(p.step as i64),
                    KeyValue::Text(fam.to_string()),
                    KeyValue::Int(*idx),
                ];
                *idx += 1;
                proj.push(key.clone(), "svd1", p.x, None, "")?;
                proj.push(key, "svd2", p.y, None, "")?;
            }
            for m in &pset.means {
                let key = vec![
                    KeyValue::Int(layer as i64),
                    KeyValue::Int(head as i64),
                    KeyValue::Int(m.step as i64),
                    KeyValue::Text(family_str(m.family).to_string()),
                ];
                means.push(key.clone(), "svd1", m.x, None, "")?;
                means.push(key, "svd2", m.y, None, "")?;
            }
        }
    }
    proj.write_csv(&opts.out.join(proj_name))?;
    means.write_csv(&opts.out.join(means_name))?;
    Ok(())
}

fn run_seeds(opts: &QkTrackOptions, seeds: &[u64], t0: Instant) -> anyhow::Result<QkTrackOutcome> {
    // Per seed: load <checkpoints>/seed<k>/, snapshot, concat across heads.
    let results = map_indexed(opts.threads, seeds.len(), |i| -> anyhow::Result<_> {
        let seed = seeds[i];
        let dir = opts.checkpoints.join(format!("seed{seed}"));
        let checkpoints: Vec<Checkpoint<f32>> =
            load_checkpoint_dir(&dir).with_context(|| format!("seed {seed}"))?;
        let seq_len = checkpoints[0].params.config.max_seq_len;
        let probe = load_probe(&opts.probe, seq_len, opts.probe_seqs)?;
        let set = snapshot_checkpoints(&checkpoints, &probe, &HeadSelector::All)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        let rows = concat_head_trajectories(&set).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok((seed, rows))
    });

    let mut fig21 = Report::new("qk-track", "fig21", &["seed", "step", "layer"]);
    for r in results {
        let (seed, rows) = r?;
        for (step, layer, cos) in rows {
            fig21.push(
                vec![
                    KeyValue::Int(seed as i64),
                    KeyValue::Int(step as i64),
                    KeyValue::Int(layer as i64),
                ],
                "cos_qbar_kbar_concat",
                cos,
                None,
                "cosine",
            )?;
        }
    }
    fig21.write_csv(&opts.out.join("fig21_seeds.csv"))?;

    let mut manifest = RunManifest::new("qk-track");
    manifest
        .arg("checkpoints", opts.checkpoints.display())
        .arg("probe", opts.probe.display())
        .arg("probe-seqs", opts.probe_seqs)
        .arg(
            "seeds",
            seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        )
        .output("fig21_seeds.csv")
        .note("mean representations concatenated across heads per layer");
    manifest.threads = opts.threads;
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    manifest.write(&opts.out.join("run_manifest.json"))?;

    Ok(QkTrackOutcome { table: TrajectoryTable { points: Vec::new(), entropy: Vec::new() } })
}
