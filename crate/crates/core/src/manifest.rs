//! `manifest.json`: run-level facts indexing a directory of epoch snapshots.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u64 = 1;
pub const EPOCH_TOKEN: &str = "{epoch}";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("unsupported manifest version {0} (expected {MANIFEST_VERSION})")]
    UnsupportedVersion(u64),
    #[error("invalid manifest field `{field}`: {reason}")]
    InvalidField { field: &'static str, reason: String },
    #[error("missing snapshot for epoch {epoch}: {}", path.display())]
    MissingSnapshot { epoch: u64, path: PathBuf },
    #[error("i/o failure on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparameters {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub version: u64,
    pub run_id: String,
    pub seed: u64,
    pub epochs: u64,
    pub includes_initial: bool,
    pub checkpoint_pattern: String,
    pub architecture: String,
    pub hyperparameters: Hyperparameters,
}

impl RunManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(ManifestError::UnsupportedVersion(self.version));
        }
        let invalid = |field, reason: &str| {
            Err(ManifestError::InvalidField {
                field,
                reason: reason.to_owned(),
            })
        };
        if self.epochs < 1 {
            return invalid("epochs", "epochs must be >= 1");
        }
        if self.run_id.is_empty() {
            return invalid("run_id", "run_id must be non-empty");
        }
        if self.checkpoint_pattern.matches(EPOCH_TOKEN).count() != 1 {
            return invalid(
                "checkpoint_pattern",
                "checkpoint_pattern must contain the token {epoch} exactly once",
            );
        }
        let hp = &self.hyperparameters;
        if !(hp.lr.is_finite() && hp.momentum.is_finite() && hp.weight_decay.is_finite()) {
            return invalid("hyperparameters", "hyperparameters must be finite");
        }
        Ok(())
    }

    /// File name of the snapshot for `epoch`.
    pub fn snapshot_file_name(&self, epoch: u64) -> String {
        self.checkpoint_pattern
            .replace(EPOCH_TOKEN, &epoch.to_string())
    }

    /// Epoch indices covered by the run, ascending.
    pub fn epoch_indices(&self) -> impl Iterator<Item = u64> {
        let first = if self.includes_initial { 0 } else { 1 };
        first..=self.epochs
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}

pub fn read_manifest(source: &str) -> Result<RunManifest, ManifestError> {
    let value: Value =
        serde_json::from_str(source).map_err(|e| ManifestError::MalformedManifest(e.to_string()))?;
    if let Some(version) = value.get("version").and_then(Value::as_u64) {
        if version != MANIFEST_VERSION {
            return Err(ManifestError::UnsupportedVersion(version));
        }
    }
    let manifest: RunManifest =
        serde_json::from_value(value).map_err(|e| ManifestError::MalformedManifest(e.to_string()))?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(run_directory: impl AsRef<Path>) -> Result<RunManifest, ManifestError> {
    let path = run_directory.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| ManifestError::Io { path, source })?;
    read_manifest(&text)
}

pub fn save_manifest(manifest: &RunManifest, run_directory: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = run_directory.as_ref().join(MANIFEST_FILE);
    fs::write(&path, manifest.to_json()).map_err(|source| ManifestError::Io { path, source })
}

/// Resolves every snapshot path of a run, failing on the first absent epoch.
pub fn list_epoch_paths(
    run_directory: impl AsRef<Path>,
    manifest: &RunManifest,
) -> Result<Vec<(u64, PathBuf)>, ManifestError> {
    let dir = run_directory.as_ref();
    manifest
        .epoch_indices()
        .map(|epoch| {
            let path = dir.join(manifest.snapshot_file_name(epoch));
            if path.is_file() {
                Ok((epoch, path))
            } else {
                Err(ManifestError::MissingSnapshot { epoch, path })
            }
        })
        .collect()
}
