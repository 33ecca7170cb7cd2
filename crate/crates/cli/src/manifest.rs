use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

/// Enough to rerun a command: the argument vector plus the resolved
/// configuration it produced.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub format_version: u64,
    pub command: String,
    pub version: String,
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub threads: usize,
    pub parallel: bool,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            format_version: hybridfem::io::FORMAT_VERSION,
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            argv: std::env::args().collect(),
            config,
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            threads: crate::threads(),
            parallel: cfg!(feature = "parallel"),
            duration_secs: 0.0,
        }
    }

    pub fn seed(mut self, name: &str, value: u64) -> Self {
        self.seeds.insert(name.to_string(), value);
        self
    }

    pub fn input(mut self, p: &Path) -> Self {
        self.inputs.push(p.to_path_buf());
        self
    }

    pub fn output(mut self, p: &Path) -> Self {
        self.outputs.push(p.to_path_buf());
        self
    }

    /// Writes `<out>.manifest.json` next to the primary output.
    pub fn finish(mut self, primary: &Path, elapsed: Duration) -> hybridfem::Result<PathBuf> {
        self.duration_secs = elapsed.as_secs_f64();
        let path = manifest_path(primary);
        hybridfem::io::write_json(&path, &self)?;
        Ok(path)
    }
}

pub fn manifest_path(primary: &Path) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    primary.with_file_name(name)
}
