use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub wall_seconds: f64,
    pub status: String,
    pub warnings: Vec<String>,
}

/// Provenance of an output tree. `files` lists every file under the output
/// directory except the manifest itself, with its SHA-256.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
    pub files: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn load_or_new(out: &Path, config_hash: &str, seed: u64) -> Self {
        let mut m: RunManifest = std::fs::read_to_string(out.join(MANIFEST_FILE))
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default();
        if m.config_hash != config_hash || m.seed != seed {
            // Settings changed: earlier stage records no longer describe
            // what a rerun would produce, but their files stay listed.
            m.stages.clear();
        }
        m.config_hash = config_hash.to_string();
        m.seed = seed;
        m.versions = versions();
        m
    }

    pub fn record(&mut self, stage: &str, rec: StageRecord) {
        self.stages.insert(stage.to_string(), rec);
    }

    /// Rescans `out` and writes the manifest.
    pub fn write(&mut self, out: &Path) -> CliResult<()> {
        self.files = inventory(out)?;
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(out.join(MANIFEST_FILE), text + "\n").map_err(|e| CliError::io(out, e))
    }

    /// Every warning, prefixed with its stage.
    pub fn warnings(&self) -> Vec<String> {
        self.stages
            .iter()
            .flat_map(|(s, r)| r.warnings.iter().map(move |w| format!("{s}: {w}")))
            .collect()
    }
}

fn versions() -> BTreeMap<String, String> {
    BTreeMap::from([
        ("spillover-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ("format".to_string(), "1".to_string()),
    ])
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Relative path (with `/`) to content hash for every file under `root`.
pub fn inventory(root: &Path) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<PathBuf> = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let entries = std::fs::read_dir(&dir).map_err(|e| CliError::io(&dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| CliError::io(&dir, e))?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root");
            let key = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy())
                .collect::<Vec<_>>()
                .join("/");
            if key != MANIFEST_FILE {
                out.insert(key, sha256_file(&path)?);
            }
        }
    }
    Ok(out)
}
