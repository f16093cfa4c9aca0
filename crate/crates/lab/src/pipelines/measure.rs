//! Per-layer anisotropy profiles and drift correlation from an activation
//! dump.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anisolab_core::metrics::{
    drift_correlation, isotropic_cosine_quantile, layer_profiles, LayerMetricProfile,
};
use anisolab_core::Rng;
use anyhow::Context;
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::report::{KeyValue, Report};

pub struct MeasureOptions {
    pub dump: PathBuf,
    pub pairs: usize,
    pub seed: u64,
    pub grounded: bool,
    pub permutations: usize,
    pub out: PathBuf,
}

#[derive(Debug, Serialize)]
pub struct CorrelationJson {
    pub experiment: String,
    pub n_layers: usize,
    pub spearman_rho: f64,
    pub spearman_p: f64,
    pub pearson_r: f64,
    pub pearson_p: f64,
    /// True when the Spearman p-value is at most 0.05.
    pub drift_correlated: bool,
    pub n_permutations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub isotropic_q95: Option<f64>,
}

pub fn run(opts: &MeasureOptions) -> anyhow::Result<Vec<LayerMetricProfile>> {
    let t0 = Instant::now();
    super::ensure_out_dir(&opts.out)?;
    let dump = crate::dump::read_dump(&opts.dump)
        .with_context(|| format!("reading dump {}", opts.dump.display()))?;

    let mut rng = Rng::derive(opts.seed, &[0x7EA5]);
    let profiles = layer_profiles(&dump.layers, opts.pairs, &mut rng)?;
    let mut corr_rng = Rng::derive(opts.seed, &[0x7EA6]);
    let corr = drift_correlation(&profiles, opts.permutations, &mut corr_rng)?;

    let q95 = if opts.grounded {
        Some(isotropic_cosine_quantile(dump.manifest.d_model, 0.95)?)
    } else {
        None
    };

    let mut report = Report::new("measure", "fig1", &["layer"]);
    for p in &profiles {
        let key = vec![KeyValue::Int(p.layer_index as i64)];
        report.push(key.clone(), "avg_cosine", p.avg_cosine, Some(p.avg_cosine_stderr), "cosine")?;
        report.push(key.clone(), "drift_norm", p.drift_norm, None, "l2")?;
        report.push(key.clone(), "mean_vector_norm", p.mean_vector_norm, None, "l2")?;
        report.push(key.clone(), "n_vectors", p.n_vectors as f64, None, "count")?;
        report.push(key.clone(), "n_pairs", p.n_pairs as f64, None, "count")?;
        if let Some(q) = q95 {
            report.push(key.clone(), "isotropic_q95", q, None, "cosine")?;
            report.push(
                key,
                "grounded_anisotropic",
                if p.avg_cosine > q { 1.0 } else { 0.0 },
                None,
                "flag",
            )?;
        }
    }
    report.write_csv(&opts.out.join("fig1_layers.csv"))?;

    let corr_json = CorrelationJson {
        experiment: "measure".to_string(),
        n_layers: profiles.len(),
        spearman_rho: corr.spearman_rho,
        spearman_p: corr.spearman_p,
        pearson_r: corr.pearson_r,
        pearson_p: corr.pearson_p,
        drift_correlated: corr.drift_correlated,
        n_permutations: corr.n_permutations,
        isotropic_q95: q95,
    };
    write_json(&opts.out.join("fig4_correlation.json"), &corr_json)?;

    let mut manifest = RunManifest::new("measure");
    manifest
        .arg("dump", opts.dump.display())
        .arg("pairs", opts.pairs)
        .arg("grounded", opts.grounded)
        .arg("permutations", opts.permutations)
        .seed("seed", opts.seed)
        .output("fig1_layers.csv")
        .output("fig4_correlation.json")
        .note("pairs are sampled without self-pairs; pools of at most 1000 vectors use the exhaustive mean")
        .note("spearman p-value is a seeded monte-carlo permutation test");
    manifest.wall_time_s = t0.elapsed().as_secs_f64();
    manifest.write(&opts.out.join("run_manifest.json"))?;

    Ok(profiles)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    use std::io::Write;
    f.write_all(b"\n")?;
    Ok(())
}
