//! Run manifests: a provenance sidecar written into every command's output
//! directory, recording what ran, on which inputs (by content hash), with
//! which settings, and what it produced. Re-running a command whose manifest
//! lists identical input hashes, parameters and seed reproduces its outputs.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Version tag for every file format this crate emits; bumped on any schema
/// change.
pub const ARTIFACT_VERSION: &str = "argile-artifacts-v1";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("io on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path, source: std::io::Error) -> ManifestError {
    ManifestError::Io { path: path.display().to_string(), source }
}

/// SHA-256 of a file's contents, hex-encoded.
pub fn sha256_file(path: &Path) -> Result<String, ManifestError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    /// Configuration file the run was driven by, if any.
    pub config_path: Option<String>,
    /// Resolved settings after defaults and flag overrides.
    pub parameters: BTreeMap<String, String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// RFC 3339 creation time.
    pub created: String,
}

impl RunManifest {
    pub fn new(command: &str) -> RunManifest {
        RunManifest {
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config_path: None,
            parameters: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            created: chrono::Utc::now().to_rfc3339(),
        }
    }

    /// Hashes `path` and appends it to the input list.
    pub fn record_input(&mut self, path: &Path) -> Result<(), ManifestError> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn set_parameter(&mut self, key: &str, value: impl Display) {
        self.parameters.insert(key.to_string(), value.to_string());
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, ManifestError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_hash_matches_the_published_test_vector() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("abc.txt");
        std::fs::write(&path, "abc").unwrap();
        assert_eq!(
            sha256_file(&path).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let missing = sha256_file(&dir.path().join("nope"));
        match missing {
            Err(ManifestError::Io { path, .. }) => assert!(path.ends_with("nope")),
            other => panic!("expected io error, got {other:?}"),
        }
    }

    #[test]
    fn manifests_round_trip_and_carry_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("in.csv");
        std::fs::write(&input, "town_id,year\nA,2001\n").unwrap();

        let mut manifest = RunManifest::new("fit");
        manifest.config_path = Some("run.toml".to_string());
        manifest.seed = Some(42);
        manifest.set_parameter("model", "zinb");
        manifest.set_parameter("max_iterations", 200);
        manifest.record_input(&input).unwrap();
        manifest.record_output(&dir.path().join("model.txt"));
        let path = manifest.write(dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "manifest.json");

        let back = read_manifest(&path).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(back.artifact_version, ARTIFACT_VERSION);
        assert_eq!(back.inputs.len(), 1);
        assert_eq!(back.inputs[0].sha256.len(), 64);
        assert_eq!(back.parameters["model"], "zinb");
        assert!(chrono::DateTime::parse_from_rfc3339(&back.created).is_ok());
    }
}
