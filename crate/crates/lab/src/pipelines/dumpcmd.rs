//! Export hidden states of a trained checkpoint as an activation dump, so
//! the measurement pipeline can run on models trained in-repo.

use std::path::PathBuf;
use std::time::Instant;

use anisolab_core::model::forward_model;
use anisolab_core::train::WindowSet;
use anisolab_core::Tensor2D;

use crate::corpus::load_corpus;
use crate::dump::{write_dump, ActivationDump, Dtype};
use crate::manifest::RunManifest;

pub struct DumpOptions {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    pub n_seqs: usize,
    pub out: PathBuf,
}

pub fn run(opts: &DumpOptions) -> anyhow::Result<()> {
    let t0 = Instant::now();
    let file = crate::checkpoint::read_checkpoint(&opts.checkpoint)?;
    let params = &file.checkpoint.params;
    let cfg = &params.config;

    let tokens = load_corpus(&opts.corpus)?;
    let windows = WindowSet::new(&tokens, cfg.max_seq_len);
    if windows.n_windows() < opts.n_seqs {
        anyhow::bail!(
            "corpus has {} windows of length {}, need {}",
            windows.n_windows(),
            cfg.max_seq_len,
            opts.n_seqs
        );
    }

    let rows = opts.n_seqs * cfg.max_seq_len;
    let mut layers: Vec<Tensor2D<f64>> =
        (0..=cfg.n_layers).map(|_| Tensor2D::zeros(rows, cfg.d_model)).collect();
    for w in 0..opts.n_seqs {
        let out = forward_model(params, windows.window(w), false)
            .map_err(|e| anyhow::anyhow!("{e}"))?;
        for (l, hidden) in out.hidden.iter().enumerate() {
            for i in 0..hidden.rows() {
                let dst = layers[l].row_mut(w * cfg.max_seq_len + i);
                for (d, &v) in dst.iter_mut().zip(hidden.row(i)) {
                    *d = v as f64;
                }
            }
        }
    }

    let dump = ActivationDump::new(
        "anisolab-toy",
        "text-bytes",
        Dtype::F32,
        &format!("hidden states at step {}", file.checkpoint.step),
        layers,
    );
    write_dump(&opts.out, &dump)?;

    if let Some(dir) = opts.out.parent() {
        let mut manifest = RunManifest::new("dump");
        manifest
            .arg("checkpoint", opts.checkpoint.display())
            .arg("corpus", opts.corpus.display())
            .arg("n-seqs", opts.n_seqs)
            .output(&opts.out.file_name().unwrap_or_default().to_string_lossy());
        manifest.wall_time_s = t0.elapsed().as_secs_f64();
        manifest.write(&dir.join("dump_manifest.json"))?;
    }
    Ok(())
}
