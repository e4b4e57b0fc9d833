use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::binfmt;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.json";
pub const LOCK_FILE: &str = "run.lock";

/// One completed unit of work: a stage for one variant (and model).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub config_hash: String,
    /// Output paths relative to the run root.
    pub outputs: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config_hash: String,
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl RunManifest {
    pub fn load_or_new(root: &Path, config_hash: &str) -> Result<Self, ExperimentError> {
        let path = root.join(MANIFEST_FILE);
        let mut manifest = if path.exists() {
            binfmt::read_json::<RunManifest>(&path)?
        } else {
            RunManifest {
                version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: String::new(),
                entries: BTreeMap::new(),
            }
        };
        manifest.config_hash = config_hash.to_string();
        Ok(manifest)
    }

    pub fn save(&self, root: &Path) -> Result<(), ExperimentError> {
        Ok(binfmt::write_json(&root.join(MANIFEST_FILE), self)?)
    }

    /// Whether `key` was produced under the current config and all of its
    /// outputs are still on disk.
    pub fn is_fresh(&self, root: &Path, key: &str) -> bool {
        self.entries.get(key).is_some_and(|e| {
            e.config_hash == self.config_hash && e.outputs.iter().all(|o| root.join(o).exists())
        })
    }
}

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(root: &Path) -> Result<Self, ExperimentError> {
        let path = root.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(ExperimentError::Locked(path))
            }
            Err(e) => Err(ExperimentError::Io { path, source: e }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
