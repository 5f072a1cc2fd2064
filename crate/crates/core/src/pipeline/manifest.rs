use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One image with its per-annotator labels and an optional prediction.
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub image: PathBuf,
    #[serde(default)]
    pub labels: Vec<PathBuf>,
    #[serde(default)]
    pub prediction: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Reads a JSON manifest and resolves its paths.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut m.entries {
            e.image = base.join(&e.image);
            for l in &mut e.labels {
                *l = base.join(&*l);
            }
            if let Some(p) = &mut e.prediction {
                *p = base.join(&*p);
            }
        }
        m.validate()?;
        Ok(m)
    }

    /// Checks the structural rules: ids are unique, non-empty and usable as
    /// file names. File contents are checked per entry when loaded, so one
    /// bad file does not reject the whole manifest.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !is_safe_id(&e.id) {
                return Err(Error::Manifest(format!("id {:?} is not a valid file name", e.id)));
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id {:?}", e.id)));
            }
        }
        Ok(())
    }

    pub fn require_labels(&self) -> Result<()> {
        match self.entries.iter().find(|e| e.labels.is_empty()) {
            Some(e) => Err(Error::Manifest(format!("entry {:?} has no labels", e.id))),
            None => Ok(()),
        }
    }

    pub fn require_predictions(&self) -> Result<()> {
        match self.entries.iter().find(|e| e.prediction.is_none()) {
            Some(e) => Err(Error::Manifest(format!("entry {:?} has no prediction", e.id))),
            None => Ok(()),
        }
    }
}

fn is_safe_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}
