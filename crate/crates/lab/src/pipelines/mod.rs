//! One module per CLI subcommand: each runs the core computation, writes
//! the figure-tagged CSV/JSON outputs, and records a run manifest.

pub mod driftlab;
pub mod dumpcmd;
pub mod isotropy;
pub mod measure;
pub mod qktrack;
pub mod traintoy;

use std::fs;
use std::path::Path;

/// Creates the output directory if needed.
pub fn ensure_out_dir(path: &Path) -> std::io::Result<()> {
    fs::create_dir_all(path)
}
