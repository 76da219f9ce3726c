//! manifest.json: config hash, seed and per-step timings and row counts.
//! The only artifact allowed to differ between identical runs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub seconds: f64,
    pub finished_unix: u64,
    pub rows: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub steps: BTreeMap<String, StepRecord>,
}

pub struct ManifestFile {
    path: PathBuf,
    manifest: Manifest,
}

impl ManifestFile {
    /// Loads `<dir>/manifest.json`, keeping earlier steps only when they ran
    /// under the same configuration.
    pub fn open(dir: &Path, config_sha256: String, seed: u64, config: BTreeMap<String, String>) -> Self {
        let path = dir.join("manifest.json");
        let previous: Option<Manifest> = std::fs::read_to_string(&path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .filter(|m: &Manifest| m.config_sha256 == config_sha256);
        let manifest = previous.unwrap_or(Manifest {
            config_sha256,
            seed,
            config,
            steps: BTreeMap::new(),
        });
        Self { path, manifest }
    }

    pub fn record(&mut self, step: &str, elapsed: Duration, rows: BTreeMap<String, u64>) -> anyhow::Result<()> {
        let finished_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.manifest.steps.insert(
            step.to_string(),
            StepRecord {
                seconds: elapsed.as_secs_f64(),
                finished_unix,
                rows,
            },
        );
        let text = serde_json::to_string_pretty(&self.manifest)? + "\n";
        std::fs::write(&self.path, text).with_context(|| format!("writing {}", self.path.display()))
    }
}
