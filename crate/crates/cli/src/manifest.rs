use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

/// Provenance record written next to every artifact. Timestamps live only
/// here so the artifacts themselves stay reproducible.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub version: &'static str,
    /// Milliseconds since the Unix epoch.
    pub started_ms: u128,
    pub finished_ms: u128,
}

pub fn now_ms() -> u128 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: Value, seed: Option<u64>, started_ms: u128) -> Self {
        Self {
            command: command.to_string(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started_ms,
            finished_ms: now_ms(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}

/// `out.json` -> `out.manifest.json`.
pub fn sidecar(artifact: &Path) -> std::path::PathBuf {
    let stem = artifact.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    artifact.with_file_name(format!("{stem}.manifest.json"))
}
