use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;

pub const RUN_MANIFEST: &str = "run.json";

/// Everything needed to re-run a command and compare its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Command line as given, without the program name.
    pub args: Vec<String>,
    /// Working directory that relative input paths refer to.
    pub cwd: PathBuf,
    /// Parsed arguments with defaults filled in.
    pub config: Command,
    pub seeds: Vec<u64>,
    pub inputs: Vec<PathBuf>,
    pub out_dir: PathBuf,
    /// Files written, relative to `out_dir`.
    pub outputs: Vec<String>,
    pub duration_s: f64,
}

impl RunManifest {
    pub fn path_in(dir: &Path) -> PathBuf {
        dir.join(RUN_MANIFEST)
    }
}
