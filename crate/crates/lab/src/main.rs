use std::path::PathBuf;
use std::process::ExitCode;

use anisolab::pipelines::{driftlab, dumpcmd, isotropy, measure, qktrack, traintoy};
use anisolab::parallel::default_threads;
use anisolab_core::qk::SvdMode;
use clap::{Args, Parser, Subcommand};

/// Anisotropy measurements for transformer hidden representations:
/// cross-layer cosine profiles, bias-injection experiments on untrained
/// blocks, toy-model training, and query/key drift tracking.
#[derive(Parser)]
#[command(name = "anisolab", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for CSVs, JSON reports, and run manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker-thread cap for parallel sections (never affects results).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Per-layer cosine/drift profiles and drift correlation from an
    /// activation dump.
    Measure(MeasureArgs),
    /// Analytic isotropic cosine baselines (density and quantile per
    /// dimension).
    CalibrateIsotropy(IsotropyArgs),
    /// Bias-injection sweep on an untrained block, with optional norm
    /// fixed-point search.
    DriftLab(DriftLabArgs),
    /// Train the byte-level toy model and emit checkpoints.
    TrainToy(TrainToyArgs),
    /// Track query/key geometry across a checkpoint directory.
    QkTrack(QkTrackArgs),
    /// Export hidden states of a checkpoint as an activation dump.
    Dump(DumpArgs),
}

#[derive(Args)]
struct MeasureArgs {
    /// Activation dump file.
    #[arg(long)]
    dump: PathBuf,
    /// Sampled cosine pairs per layer (pools of at most 1000 vectors are
    /// measured exhaustively).
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pairs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also compare each layer against the isotropic 95th-quantile
    /// baseline at the dump's dimension.
    #[arg(long)]
    grounded: bool,
    /// Permutations for the Spearman p-value.
    #[arg(long, default_value_t = 100_000, value_parser = clap::value_parser!(u64).range(1..))]
    permutations: u64,
}

#[derive(Args)]
struct IsotropyArgs {
    /// Comma-separated dimensions, e.g. 2,4,8,16,...,1024.
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8, 16, 32, 64, 128, 256, 512, 1024])]
    dims: Vec<usize>,
    /// Quantile level in (0, 1).
    #[arg(long, default_value_t = 0.95)]
    q: f64,
    /// Density grid points per dimension.
    #[arg(long, default_value_t = 401)]
    grid: usize,
}

#[derive(Args)]
struct DriftLabArgs {
    #[arg(long, default_value_t = 768)]
    d_model: usize,
    #[arg(long, default_value_t = 12)]
    heads: usize,
    #[arg(long, default_value_t = 3072)]
    d_ff: usize,
    #[arg(long, default_value_t = 30_522)]
    vocab: usize,
    #[arg(long, default_value_t = 16)]
    n_seqs: usize,
    #[arg(long, default_value_t = 512)]
    seq_len: usize,
    /// Sorted non-negative bias norms.
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0])]
    norms: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also locate the input/output norm fixed point by bisection.
    #[arg(long)]
    find_fixed_point: bool,
    /// Bisection bracket "lo,hi".
    #[arg(long, default_value = "0,200", value_parser = parse_bracket)]
    bracket: (f64, f64),
    /// Relative tolerance of the fixed-point search.
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
}

#[derive(Args)]
struct TrainToyArgs {
    /// TOML training config.
    #[arg(long)]
    config: PathBuf,
    /// Corpus file (bytes are the tokens).
    #[arg(long)]
    corpus: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Suppress per-step progress on stdout (the loss log file is always
    /// written).
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct QkTrackArgs {
    /// Directory of .ckpt files (or of seed<k>/ subdirectories with
    /// --seeds).
    #[arg(long)]
    checkpoints: PathBuf,
    /// Probe corpus file.
    #[arg(long)]
    probe: PathBuf,
    /// Probe sequences (first windows of the probe corpus).
    #[arg(long, default_value_t = 128)]
    probe_seqs: usize,
    /// Projection basis: union of queries and keys, or one family only.
    #[arg(long, default_value = "union", value_parser = parse_svd_mode)]
    svd: SvdMode,
    /// Fraction of pooled representations used to fit the SVD.
    #[arg(long, default_value_t = 0.2)]
    subsample: f64,
    /// |cosine| threshold for labelling head alignment.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Projected cloud points kept per (step, family).
    #[arg(long, default_value_t = 512)]
    max_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Multi-seed table mode: "0..4" or "0,1,2"; reads seed<k>/ subdirs.
    #[arg(long, value_parser = parse_seed_list)]
    seeds: Option<std::vec::Vec<u64>>,
}

#[derive(Args)]
struct DumpArgs {
    /// Checkpoint file to run.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Corpus providing the probe windows.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of sequences to pool.
    #[arg(long, default_value_t = 32)]
    n_seqs: usize,
    /// Output dump file name (inside --out).
    #[arg(long, default_value = "hidden.dump")]
    file: String,
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err("expected \"lo,hi\"".into());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = parts[1].trim().parse().map_err(|e| format!("{e}"))?;
    if !(lo >= 0.0 && hi > lo) {
        return Err("need 0 <= lo < hi".into());
    }
    Ok((lo, hi))
}

fn parse_svd_mode(s: &str) -> Result<SvdMode, String> {
    match s {
        "union" => Ok(SvdMode::Union),
        "q" => Ok(SvdMode::QueriesOnly),
        "k" => Ok(SvdMode::KeysOnly),
        other => Err(format!("unknown mode {other:?} (expected union|q|k)")),
    }
}

fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    if let Some((a, b)) = s.split_once("..") {
        let lo: u64 = a.trim().parse().map_err(|e| format!("{e}"))?;
        let hi: u64 = b.trim().parse().map_err(|e| format!("{e}"))?;
        if hi < lo {
            return Err("empty seed range".into());
        }
        return Ok((lo..=hi).collect());
    }
    s.split(',')
        .map(|p| p.trim().parse().map_err(|e| format!("{e}")))
        .collect()
}

fn usage_error(msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.unwrap_or_else(default_threads).max(1);
    let out = cli.out.clone();

    let result: anyhow::Result<()> = match cli.command {
        Command::Measure(a) => measure::run(&measure::MeasureOptions {
            dump: a.dump,
            pairs: a.pairs as usize,
            seed: a.seed,
            grounded: a.grounded,
            permutations: a.permutations as usize,
            out,
        })
        .map(|_| ()),
        Command::CalibrateIsotropy(a) => {
            if !(a.q > 0.0 && a.q < 1.0) {
                return usage_error("--q must lie strictly inside (0, 1)");
            }
            if a.dims.iter().any(|&d| d < 2) {
                return usage_error("--dims entries must be >= 2");
            }
            isotropy::run(&isotropy::IsotropyOptions {
                dims: a.dims,
                q: a.q,
                grid_points: a.grid,
                threads,
                out,
            })
        }
        Command::DriftLab(a) => {
            if a.norms.is_empty() || a.norms.iter().any(|&n| n < 0.0) {
                return usage_error("--norms must be non-empty and non-negative");
            }
            if a.norms.windows(2).any(|w| w[0] > w[1]) {
                return usage_error("--norms must be sorted ascending");
            }
            driftlab::run(&driftlab::DriftLabOptions {
                d_model: a.d_model,
                n_heads: a.heads,
                d_ff: a.d_ff,
                vocab_size: a.vocab,
                n_seqs: a.n_seqs,
                seq_len: a.seq_len,
                norms: a.norms,
                seed: a.seed,
                fixed_point: a.find_fixed_point.then_some(a.bracket),
                fixed_point_tol: a.tol,
                out,
            })
            .map(|_| ())
        }
        Command::TrainToy(a) => traintoy::run(&traintoy::TrainToyOptions {
            config: a.config,
            corpus: a.corpus,
            seed: a.seed,
            quiet: a.quiet,
            out,
        })
        .map(|_| ()),
        Command::QkTrack(a) => {
            if !(a.subsample > 0.0 && a.subsample <= 1.0) {
                return usage_error("--subsample must lie in (0, 1]");
            }
            qktrack::run(&qktrack::QkTrackOptions {
                checkpoints: a.checkpoints,
                probe: a.probe,
                probe_seqs: a.probe_seqs,
                svd: a.svd,
                subsample: a.subsample,
                threshold: a.threshold,
                max_points: a.max_points,
                seed: a.seed,
                seeds: a.seeds,
                threads,
                out,
            })
            .map(|_| ())
        }
        Command::Dump(a) => {
            if let Err(e) = anisolab::pipelines::ensure_out_dir(&out) {
                eprintln!("error: {e}");
                return ExitCode::FAILURE;
            }
            dumpcmd::run(&dumpcmd::DumpOptions {
                checkpoint: a.checkpoint,
                corpus: a.corpus,
                n_seqs: a.n_seqs,
                out: out.join(a.file),
            })
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
