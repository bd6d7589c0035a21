use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use crate::{CliResult, Context};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub started_unix: f64,
    pub wall_seconds: f64,
    pub version: &'static str,
    pub threads: usize,
}

/// Collects what a command read and wrote, then writes the manifest.
pub struct Recorder {
    command: &'static str,
    started: SystemTime,
    clock: Instant,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Self {
            command,
            started: SystemTime::now(),
            clock: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(self, path: &Path, config: Value, seed: Option<u64>) -> CliResult<()> {
        let manifest = RunManifest {
            command: self.command.to_owned(),
            config,
            seed,
            inputs: self.inputs,
            outputs: self.outputs,
            started_unix: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_seconds: self.clock.elapsed().as_secs_f64(),
            version: env!("CARGO_PKG_VERSION"),
            threads: rayon::current_num_threads(),
        };
        write_json(path, &manifest)
    }
}

/// Manifest location for a single-file output: `<out>.manifest.json`.
pub fn beside(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(immsbm::Error::from)
        .at(path)?;
    text.push('\n');
    immsbm::io::write_atomic(path, text.as_bytes()).at(path)
}
