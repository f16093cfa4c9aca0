//! End-to-end CLI checks: every subcommand runs, outputs are
//! byte-reproducible, and usage errors exit nonzero.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use anisolab::corpus::synthetic_text;
use anisolab::dump::{write_dump, ActivationDump, Dtype};
use anisolab_core::numerics::ops::gaussian_matrix;
use anisolab_core::{Rng, Tensor2D};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_anisolab"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn anisolab");
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_toy_dump(path: &Path, seed: u64) {
    // 4 layers with a growing common drift component, so the correlation
    // pipeline has something to find.
    let mut rng = Rng::new(seed);
    let layers: Vec<Tensor2D<f64>> = (0..4)
        .map(|l| {
            let mut t = gaussian_matrix(&mut rng, 60, 16, 0.0, 1.0);
            for i in 0..t.rows() {
                for j in 0..t.cols() {
                    t.set(i, j, t.get(i, j) + 0.8 * l as f64);
                }
            }
            t
        })
        .collect();
    let dump = ActivationDump::new("toy", "text-bytes", Dtype::F32, "cli test", layers);
    write_dump(path, &dump).unwrap();
}

#[test]
fn measure_runs_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("toy.dump");
    write_toy_dump(&dump, 5);

    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    for out in [&out1, &out2] {
        run_ok(&[
            "measure",
            "--dump",
            dump.to_str().unwrap(),
            "--pairs",
            "500",
            "--seed",
            "3",
            "--permutations",
            "2000",
            "--grounded",
            "--out",
            out.to_str().unwrap(),
        ]);
    }
    let csv1 = fs::read(out1.join("fig1_layers.csv")).unwrap();
    let csv2 = fs::read(out2.join("fig1_layers.csv")).unwrap();
    assert!(!csv1.is_empty());
    assert_eq!(csv1, csv2, "per-layer CSV not byte-reproducible");
    let j1 = fs::read(out1.join("fig4_correlation.json")).unwrap();
    let j2 = fs::read(out2.join("fig4_correlation.json")).unwrap();
    assert_eq!(j1, j2);

    // Layer count contract: 4 layers x (5 base + 2 grounded) metric rows.
    let text = String::from_utf8(csv1).unwrap();
    assert_eq!(text.lines().count(), 1 + 4 * 7);
    assert!(fs::metadata(out1.join("run_manifest.json")).unwrap().is_file());
}

#[test]
fn measure_rejects_zero_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("toy.dump");
    write_toy_dump(&dump, 6);
    let out = bin()
        .args(["measure", "--dump", dump.to_str().unwrap(), "--pairs", "0"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn measure_reports_bad_magic() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("bad.dump");
    fs::write(&dump, b"NOTADUMPxxxxxxxxxxxxxxxx").unwrap();
    let out = bin()
        .args(["measure", "--dump", dump.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("magic"), "stderr: {stderr}");
}

#[test]
fn calibrate_isotropy_exact_d3_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("iso");
    run_ok(&[
        "calibrate-isotropy",
        "--dims",
        "2,3,16",
        "--q",
        "0.95",
        "--grid",
        "11",
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(out.join("fig16_quantile.csv")).unwrap();
    let d3 = text.lines().find(|l| l.contains(",3,quantile,")).expect("d=3 row");
    let value: f64 = d3.split(',').nth(4).unwrap().parse().unwrap();
    assert!((value - 0.9).abs() < 1e-5, "d=3 quantile {value}");
}

#[test]
fn calibrate_isotropy_rejects_bad_quantile() {
    let out = bin().args(["calibrate-isotropy", "--q", "1.5"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn drift_lab_rejects_unsorted_norms() {
    let out = bin()
        .args(["drift-lab", "--norms", "5,1", "--d-model", "32", "--heads", "4"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn drift_lab_small_block_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dl");
    run_ok(&[
        "drift-lab",
        "--d-model",
        "64",
        "--heads",
        "4",
        "--d-ff",
        "128",
        "--vocab",
        "500",
        "--n-seqs",
        "4",
        "--seq-len",
        "32",
        "--norms",
        "0,5,20",
        "--seed",
        "1",
        "--find-fixed-point",
        "--bracket",
        "0,50",
        "--out",
        out.to_str().unwrap(),
    ]);
    for f in [
        "fig5a_cosine.csv",
        "fig5b_norm.csv",
        "fig6_hist.csv",
        "fig7_qk.csv",
        "fig8_softmax.csv",
        "fig9_minmax.csv",
        "fixed_point.json",
        "run_manifest.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let fp: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fixed_point.json")).unwrap()).unwrap();
    let n_star = fp["n_star"].as_f64().unwrap();
    assert!(n_star > 0.0 && n_star < 50.0);
}

#[test]
fn train_qktrack_dump_measure_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.txt");
    fs::write(&corpus, synthetic_text(11, 120_000)).unwrap();
    let cfg_path = dir.path().join("train.toml");
    fs::write(
        &cfg_path,
        r#"
steps = 40
batch_size = 2
seq_len = 32
learning_rate = 1e-3
checkpoint_steps = [0, 20, 40]
seed = 0

[model]
n_layers = 2
d_model = 32
n_heads = 4
d_ff = 64
max_seq_len = 32
"#,
    )
    .unwrap();

    // Two seeds for the fig21 table.
    for seed in ["0", "1"] {
        let out = dir.path().join("ckpts").join(format!("seed{seed}"));
        run_ok(&[
            "train-toy",
            "--config",
            cfg_path.to_str().unwrap(),
            "--corpus",
            corpus.to_str().unwrap(),
            "--seed",
            seed,
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ]);
        for f in ["step-0000000.ckpt", "step-0000020.ckpt", "step-0000040.ckpt", "loss_log.jsonl"]
        {
            assert!(out.join(f).is_file(), "missing {f}");
        }
    }

    // Single-run tracking with the union basis.
    let track_out = dir.path().join("qk");
    run_ok(&[
        "qk-track",
        "--checkpoints",
        dir.path().join("ckpts/seed0").to_str().unwrap(),
        "--probe",
        corpus.to_str().unwrap(),
        "--probe-seqs",
        "8",
        "--max-points",
        "16",
        "--out",
        track_out.to_str().unwrap(),
    ]);
    for f in [
        "fig10_proj.csv",
        "fig10_means.csv",
        "fig11_cosine.csv",
        "fig12_dot.csv",
        "fig13_entropy.csv",
        "head_dynamics.json",
    ] {
        assert!(track_out.join(f).is_file(), "missing {f}");
    }

    // Single-family basis variant.
    let track_q = dir.path().join("qk_q");
    run_ok(&[
        "qk-track",
        "--checkpoints",
        dir.path().join("ckpts/seed0").to_str().unwrap(),
        "--probe",
        corpus.to_str().unwrap(),
        "--probe-seqs",
        "8",
        "--svd",
        "q",
        "--max-points",
        "16",
        "--out",
        track_q.to_str().unwrap(),
    ]);
    assert!(track_q.join("fig17-20_proj_q.csv").is_file());

    // Multi-seed table.
    let seeds_out = dir.path().join("qk_seeds");
    run_ok(&[
        "qk-track",
        "--checkpoints",
        dir.path().join("ckpts").to_str().unwrap(),
        "--probe",
        corpus.to_str().unwrap(),
        "--probe-seqs",
        "8",
        "--seeds",
        "0..1",
        "--out",
        seeds_out.to_str().unwrap(),
    ]);
    let fig21 = fs::read_to_string(seeds_out.join("fig21_seeds.csv")).unwrap();
    // Header + 2 seeds x 3 steps x 2 layers.
    assert_eq!(fig21.lines().count(), 1 + 12, "fig21:\n{fig21}");

    // Export hidden states and measure them.
    let dump_out = dir.path().join("dumped");
    run_ok(&[
        "dump",
        "--checkpoint",
        dir.path().join("ckpts/seed0/step-0000040.ckpt").to_str().unwrap(),
        "--corpus",
        corpus.to_str().unwrap(),
        "--n-seqs",
        "8",
        "--file",
        "toy.dump",
        "--out",
        dump_out.to_str().unwrap(),
    ]);
    let measure_out = dir.path().join("measured");
    run_ok(&[
        "measure",
        "--dump",
        dump_out.join("toy.dump").to_str().unwrap(),
        "--pairs",
        "300",
        "--permutations",
        "1000",
        "--out",
        measure_out.to_str().unwrap(),
    ]);
    let csv = fs::read_to_string(measure_out.join("fig1_layers.csv")).unwrap();
    // n_layers + 1 boundaries, 5 metric rows each.
    assert_eq!(csv.lines().count(), 1 + 3 * 5);
}

#[test]
fn train_rejects_missing_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("train.toml");
    fs::write(
        &cfg_path,
        "steps = 1\nbatch_size = 1\nseq_len = 8\nlearning_rate = 1e-3\ncheckpoint_steps = [0, 1]\n[model]\nn_layers = 1\nd_model = 16\nn_heads = 2\nd_ff = 32\n",
    )
    .unwrap();
    let out = bin()
        .args([
            "train-toy",
            "--config",
            cfg_path.to_str().unwrap(),
            "--corpus",
            dir.path().join("nope.txt").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
}
