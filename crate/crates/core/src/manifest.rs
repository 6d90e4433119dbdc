//! Run manifests: every CLI run records its command, config digest, seed,
//! timestamps, and artifact paths so any result can be reproduced from
//! (digest, seed).

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub command: String,
    /// SHA-256 of the loaded config bytes (hex), empty when no config file
    /// was involved.
    pub config_digest: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn start(command: impl Into<String>, config_bytes: &[u8], seed: u64) -> Self {
        RunManifest {
            format_version: MANIFEST_FORMAT_VERSION,
            command: command.into(),
            config_digest: digest_hex(config_bytes),
            seed,
            started_at: now(),
            finished_at: None,
            artifacts: Vec::new(),
        }
    }

    pub fn add_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn finish(&mut self) {
        self.finished_at = Some(now());
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

pub fn digest_hex(bytes: &[u8]) -> String {
    if bytes.is_empty() {
        return String::new();
    }
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    out.iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339()
}
