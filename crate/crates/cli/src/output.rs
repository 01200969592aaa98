//! Output directory bookkeeping: every data file is hashed into a
//! deterministic `manifest.json`; wall-clock data goes to `run_info.json`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn unix_seconds() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Failure {
    /// Grid point, fit or check that failed.
    pub item: String,
    pub error: String,
}

/// Deterministic record of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub files: Vec<FileEntry>,
    pub failures: Vec<Failure>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointTiming {
    pub item: String,
    pub seconds: f64,
}

/// Non-reproducible side data of a run.
#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub started_unix: f64,
    pub finished_unix: f64,
    pub jobs: usize,
    pub wall_clock: Vec<PointTiming>,
}

pub struct OutputDir {
    root: PathBuf,
    files: BTreeMap<String, FileEntry>,
    pub failures: Vec<Failure>,
    pub timings: Vec<PointTiming>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(root)?;
        Ok(Self { root: root.to_path_buf(), files: BTreeMap::new(), failures: Vec::new(), timings: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write `bytes` to the relative path `name` and record its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.root.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, bytes)?;
        self.files.insert(
            name.to_string(),
            FileEntry { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() },
        );
        log::debug!("wrote {}", path.display());
        Ok(())
    }

    /// Render with a core CSV writer, then store.
    pub fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> qpssh_core::Result<()>,
    {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Compute(e.to_string()))?;
        buf.push(b'\n');
        self.write(name, &buf)
    }

    pub fn fail(&mut self, item: impl Into<String>, err: impl std::fmt::Display) {
        let item = item.into();
        log::warn!("{item} failed: {err}");
        self.failures.push(Failure { item, error: err.to_string() });
    }

    pub fn time(&mut self, item: impl Into<String>, seconds: f64) {
        self.timings.push(PointTiming { item: item.into(), seconds });
    }

    /// Write `manifest.json` and `run_info.json`.
    pub fn finish(
        mut self,
        command: &str,
        config_sha256: String,
        jobs: usize,
        started: f64,
    ) -> Result<RunManifest, CliError> {
        let manifest = RunManifest {
            tool: "qpssh",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config_sha256,
            files: self.files.values().cloned().collect(),
            failures: std::mem::take(&mut self.failures),
        };
        let info = RunInfo {
            started_unix: started,
            finished_unix: unix_seconds(),
            jobs,
            wall_clock: std::mem::take(&mut self.timings),
        };
        for (name, bytes) in [
            ("manifest.json", serde_json::to_vec_pretty(&manifest)),
            ("run_info.json", serde_json::to_vec_pretty(&info)),
        ] {
            let mut bytes = bytes.map_err(|e| CliError::Compute(e.to_string()))?;
            bytes.push(b'\n');
            let mut f = std::fs::File::create(self.root.join(name))?;
            f.write_all(&bytes)?;
        }
        Ok(manifest)
    }
}
