//! Run manifests: every subcommand writes one, listing the exact flag set,
//! seeds, and output files, so any run can be reproduced byte-for-byte.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    /// Flag name -> rendered value, sorted.
    pub args: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    /// File names written in the output directory.
    pub outputs: Vec<String>,
    /// Fixed methodology notes (no dropout, permutation counts, ...).
    pub notes: Vec<String>,
    pub threads: usize,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            tool: "anisolab".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: subcommand.to_string(),
            args: BTreeMap::new(),
            seeds: BTreeMap::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            threads: 1,
            wall_time_s: 0.0,
        }
    }

    pub fn arg(&mut self, name: &str, value: impl ToString) -> &mut Self {
        self.args.insert(name.to_string(), value.to_string());
        self
    }

    pub fn seed(&mut self, name: &str, value: u64) -> &mut Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn output(&mut self, name: &str) -> &mut Self {
        self.outputs.push(name.to_string());
        self
    }

    pub fn note(&mut self, text: &str) -> &mut Self {
        self.notes.push(text.to_string());
        self
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut f = fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        f.write_all(b"\n")
    }
}
