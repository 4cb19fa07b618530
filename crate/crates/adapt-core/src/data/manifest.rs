//! Dataset manifests: which binary files belong to which dataset and split.
//!
//! Manifests are TOML. Paths are resolved relative to the manifest file:
//!
//! ```toml
//! [[dataset]]
//! id = "har"
//! split = "train"
//! path = "har_train.adts"
//! classes = 6
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub path: PathBuf,
    /// Declared class count; absent for unlabeled data.
    pub classes: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestFile {
    #[serde(rename = "dataset")]
    datasets: Vec<ManifestEntry>,
}

#[derive(Debug, Clone)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parsed: ManifestFile = toml::from_str(&text)
            .map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let base_dir = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();
        let manifest = Self { entries: parsed.datasets, base_dir };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_entries(entries: Vec<ManifestEntry>, base_dir: PathBuf) -> Result<Self> {
        let manifest = Self { entries, base_dir };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ManifestFile { datasets: self.entries.clone() };
        let text = toml::to_string_pretty(&file)
            .map_err(|e| Error::format(format!("manifest serialize: {e}")))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::validation("manifest: no dataset entries"));
        }
        let mut seen = BTreeSet::new();
        for entry in &self.entries {
            if !seen.insert((entry.id.clone(), entry.split)) {
                return Err(Error::validation(format!(
                    "manifest: duplicate entry for ({}, {})",
                    entry.id, entry.split
                )));
            }
            if let Some(classes) = entry.classes {
                if classes < 2 {
                    return Err(Error::validation(format!(
                        "manifest: dataset {} declares {} classes, need at least 2",
                        entry.id, classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn entries_for(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Entry path resolved against the manifest's directory.
    pub fn resolve_path(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }
}
