//! Run manifest: config hash, versions and file digests. Wall-clock data lives in its own
//! field so that everything else is reproducible byte for byte.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: String,
    pub pipeline: String,
    pub config_hash: String,
    pub versions: Versions,
    pub threads: usize,
    pub files: Vec<FileDigest>,
    pub exit_code: i32,
    pub timing: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub harness: String,
    pub core: String,
}

impl Versions {
    pub fn current() -> Self {
        Versions { harness: env!("CARGO_PKG_VERSION").into(), core: pauli_lll::VERSION.into() }
    }
}

/// Collects output files for one run directory.
pub struct OutputDir {
    pub path: PathBuf,
    pub config_hash: String,
    files: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(path: &Path, cfg: &RunConfig) -> HarnessResult<Self> {
        std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))?;
        let mut out = OutputDir { path: path.to_path_buf(), config_hash: cfg.hash(), files: Vec::new() };
        out.write("config.json", cfg.to_json().as_bytes())?;
        Ok(out)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> HarnessResult<()> {
        let p = self.path.join(name);
        std::fs::write(&p, bytes).map_err(|e| HarnessError::io(&p, e))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileDigest { name: name.into(), sha256: hex(&Sha256::digest(bytes)), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Serialize with the config hash embedded at the top level.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> HarnessResult<()> {
        let mut v = serde_json::to_value(value)?;
        let wrapped = match v {
            serde_json::Value::Object(ref mut m) => {
                m.insert("config_hash".into(), self.config_hash.clone().into());
                v
            }
            other => serde_json::json!({ "config_hash": self.config_hash, "data": other }),
        };
        let s = serde_json::to_string_pretty(&wrapped)? + "\n";
        self.write(name, s.as_bytes())
    }

    /// CSV with a leading comment line carrying the config hash.
    pub fn write_csv(&mut self, name: &str, body: &str) -> HarnessResult<()> {
        let s = format!("# config_hash={}\n{body}", self.config_hash);
        self.write(name, s.as_bytes())
    }

    pub fn files(&self) -> &[FileDigest] {
        &self.files
    }

    pub fn finish(mut self, cfg: &RunConfig, threads: usize, exit_code: i32, started: SystemTime, wall: Duration) -> HarnessResult<Manifest> {
        self.files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = Manifest {
            run: cfg.name.clone(),
            pipeline: cfg.pipeline.name().into(),
            config_hash: self.config_hash.clone(),
            versions: Versions::current(),
            threads,
            files: self.files.clone(),
            exit_code,
            timing: Timing {
                started_unix: started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
                wall_seconds: wall.as_secs_f64(),
            },
        };
        let s = serde_json::to_string_pretty(&m)? + "\n";
        let p = self.path.join("manifest.json");
        std::fs::write(&p, s).map_err(|e| HarnessError::io(&p, e))?;
        Ok(m)
    }
}
