//! Run manifest: enough provenance to reproduce every output byte-exactly.

use crate::config::FileConfig;
use serde::Serialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
    /// The configuration after defaults and overrides were applied.
    pub config_echo: FileConfig,
    /// Delays actually used by DPST runs (either explicit or optimizer output).
    pub resolved_delays: Option<Vec<f64>>,
    pub delay_unit_note: Option<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config_echo: FileConfig) -> Self {
        Self {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            threads: None,
            wall_time_s: 0.0,
            config_echo,
            resolved_delays: None,
            delay_unit_note: None,
            outputs: Vec::new(),
        }
    }
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> anyhow::Result<PathBuf> {
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(&path, text)?;
    Ok(path)
}
