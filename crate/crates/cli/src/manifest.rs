//! Run manifest: config hash, artifact list with content hashes, versions
//! and stage timings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunManifest {
    pub config_hash: String,
    pub artifacts: Vec<ArtifactEntry>,
    pub versions: BTreeMap<String, String>,
    /// Stage wall times in seconds.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(config_hash: String) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("mslab".into(), env!("CARGO_PKG_VERSION").into());
        Self {
            config_hash,
            artifacts: Vec::new(),
            versions,
            timings: BTreeMap::new(),
        }
    }

    pub fn load_or_new(path: &Path, config_hash: &str) -> Self {
        std::fs::read_to_string(path)
            .ok()
            .and_then(|t| serde_json::from_str::<RunManifest>(&t).ok())
            .filter(|m| m.config_hash == config_hash)
            .unwrap_or_else(|| Self::new(config_hash.to_string()))
    }

    pub fn record_artifact(&mut self, root: &Path, file: &Path) -> anyhow::Result<()> {
        let bytes = std::fs::read(file)?;
        let rel = file
            .strip_prefix(root)
            .unwrap_or(file)
            .to_string_lossy()
            .into_owned();
        let hash = hex::encode(Sha256::digest(&bytes));
        self.artifacts.retain(|a| a.path != rel);
        self.artifacts.push(ArtifactEntry { path: rel, sha256: hash });
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn record_timing(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.to_string(), seconds);
    }

    pub fn save(&self, path: &PathBuf) -> anyhow::Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}
