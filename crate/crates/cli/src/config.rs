//! Run configuration: JSON file merged with command-line overrides.

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use mslab_core::lab::LabConfig;
use mslab_core::scene::SceneKind;

/// Serialized run configuration. Every field of the lab configuration is
/// reachable through the config file; the common ones also map to flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub lab: LabConfig,
    /// Restrict the corpus to these scene ids (empty = full corpus).
    #[serde(default)]
    pub scenes: Vec<String>,
    /// Sweep centers; defaults to the scene center.
    #[serde(default)]
    pub centers: Vec<[f64; 3]>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            lab: LabConfig::default(),
            scenes: Vec::new(),
            centers: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| "parsing config JSON")?;
        Ok(cfg)
    }

    /// Apply CLI overrides (flags beat the file).
    pub fn apply_overrides(
        &mut self,
        grid: Option<usize>,
        seed: Option<u64>,
        scene: Option<&str>,
    ) -> anyhow::Result<()> {
        if let Some(n) = grid {
            self.lab.grid_n = n;
        }
        if let Some(s) = seed {
            self.lab.seed = s;
        }
        if let Some(k) = scene {
            // Either a corpus id or a bare kind selecting its scenes.
            if SceneKind::parse(k).is_ok() {
                self.scenes = vec![format!("{}-at", k.to_ascii_lowercase())];
            } else {
                self.scenes = vec![k.to_string()];
            }
        }
        if let Err(e) = self.lab.validate() {
            bail!("invalid configuration: {e}");
        }
        Ok(())
    }

    /// Stable hash of the configuration for the manifest.
    pub fn digest(&self) -> anyhow::Result<String> {
        use sha2::{Digest, Sha256};
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(bytes)))
    }
}

pub fn ensure_dir(path: &PathBuf) -> anyhow::Result<()> {
    std::fs::create_dir_all(path)
        .with_context(|| format!("creating output directory {}", path.display()))
}
