//! Run manifests, content hashes and atomic file output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the manifest's directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub point: String,
    pub exit_code: i32,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub command: String,
    pub library_version: String,
    /// Resolved configuration, as written by the runner.
    pub config: serde_json::Value,
    /// Seed of every point (`""` for a single run).
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
    pub failures: Vec<Failure>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }

    /// Files whose hash or size no longer matches, with a reason.
    pub fn verify(&self, dir: &Path) -> Vec<(String, String)> {
        let mut bad = Vec::new();
        for f in &self.files {
            let p = dir.join(&f.path);
            match std::fs::read(&p) {
                Err(e) => bad.push((f.path.clone(), format!("unreadable: {e}"))),
                Ok(bytes) => {
                    if bytes.len() as u64 != f.bytes {
                        bad.push((f.path.clone(), format!("size {} != {}", bytes.len(), f.bytes)));
                    } else if sha256_hex(&bytes) != f.sha256 {
                        bad.push((f.path.clone(), "hash mismatch".into()));
                    }
                }
            }
        }
        bad
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Collects written files for the manifest.
#[derive(Debug, Default)]
pub struct FileLog {
    root: PathBuf,
    entries: Vec<FileEntry>,
}

impl FileLog {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `rel` under the root and records it.
    pub fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.root.join(rel), bytes)?;
        self.entries.push(FileEntry {
            path: rel.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn extend(&mut self, other: FileLog) {
        self.entries.extend(other.entries);
    }

    pub fn into_entries(mut self) -> Vec<FileEntry> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.entries
    }
}
