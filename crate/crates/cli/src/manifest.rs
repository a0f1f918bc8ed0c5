use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use myotrack::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation. Timestamps live only here so the
/// primary artifacts stay byte-identical across reruns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: Option<String>,
    pub started_unix: f64,
    pub finished_unix: Option<f64>,
    pub status: String,
    pub artifacts: Vec<PathBuf>,
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    pub fn start(command: &str, seed: u64, config_hash: Option<String>) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_hash,
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            artifacts: Vec::new(),
        }
    }

    pub fn add(&mut self, path: impl Into<PathBuf>) {
        let p = path.into();
        if !self.artifacts.contains(&p) {
            self.artifacts.push(p);
        }
    }

    pub fn finish(&mut self, status: &str) {
        self.finished_unix = Some(now());
        self.status = status.to_string();
    }

    /// Writes `dir/manifest.json` through a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let tmp = dir.join(format!("{MANIFEST_FILE}.tmp"));
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))?;
        std::fs::write(&tmp, text + "\n").map_err(|e| Error::Io { path: tmp.clone(), source: e })?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::Io { path, source: e })
    }

}
