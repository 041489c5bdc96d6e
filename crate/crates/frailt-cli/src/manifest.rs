//! Run manifests: written to the output directory before any work starts, so
//! every artifact a command intends to produce is declared up front and the
//! run is auditable (resolved config, seed, corpus digest, code version).

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub resolved_config: serde_json::Value,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus_digest: Option<String>,
    pub artifacts: Vec<String>,
    pub started_unix_ms: u128,
    pub code_version: String,
}

impl RunManifest {
    pub fn new(command: &str, resolved_config: serde_json::Value, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv: std::env::args().collect(),
            resolved_config,
            seed,
            corpus_digest: None,
            artifacts: Vec::new(),
            started_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn with_corpus_digest(mut self, digest: u64) -> Self {
        self.corpus_digest = Some(format!("{digest:#018x}"));
        self
    }

    pub fn with_artifacts(mut self, paths: &[&Path]) -> Self {
        self.artifacts = paths
            .iter()
            .map(|p| p.display().to_string())
            .collect();
        self
    }

    /// Writes `manifest.json` into `out_dir`, creating the directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(out_dir)?;
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}
