use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use reorder_core::digest::sha256_hex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

/// Record of one invocation: enough to re-run it and check the outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub command: String,
    /// Command line after the program name.
    pub arguments: Vec<String>,
    pub seeds: Vec<u64>,
    pub started_at: String,
    pub finished_at: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    /// Compares the recorded output digests with the files now on disk.
    /// Relative paths are resolved against `base`, the directory the run
    /// was started from.
    pub fn verify_outputs_in(&self, base: &Path) -> Result<()> {
        let mut bad = Vec::new();
        for f in &self.outputs {
            let now = FileDigest::of(&base.join(&f.path))?;
            if now.sha256 != f.sha256 {
                bad.push(f.path.as_str());
            }
        }
        if !bad.is_empty() {
            bail!("outputs differ from the manifest: {}", bad.join(", "));
        }
        Ok(())
    }
}

/// Default location: `<primary output>.manifest.json`.
pub fn default_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
