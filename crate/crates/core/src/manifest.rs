//! Run manifests: every recipe writes a `manifest.json` recording the
//! resolved configuration, output files with content hashes, operator-
//! application counts, and wall time.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct OutputRecord {
    pub name: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Operator applications by purpose.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct MatvecReport {
    pub training: u64,
    pub pool_estimation: u64,
    pub evaluation: u64,
    pub wasted: u64,
    pub total: u64,
}

impl MatvecReport {
    pub fn new(training: u64, pool_estimation: u64, evaluation: u64, wasted: u64) -> Self {
        Self {
            training,
            pool_estimation,
            evaluation,
            wasted,
            total: training + pool_estimation + evaluation + wasted,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub recipe: String,
    pub status: String,
    pub error: Option<String>,
    pub crate_version: String,
    pub master_seed: u64,
    pub config: serde_json::Value,
    pub outputs: Vec<OutputRecord>,
    pub matvecs: MatvecReport,
    /// What the per-step budget formula predicts for `matvecs.training`.
    pub expected_training_matvecs: u64,
    pub hutchinson_evaluations: u64,
    pub wall_time_seconds: f64,
}

/// An output directory that hashes everything written into it.
pub struct OutputDir {
    dir: PathBuf,
    outputs: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), outputs: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn join(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write a file and record its hash for the manifest.
    pub fn write(&mut self, name: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        fs::write(&path, contents)?;
        self.outputs.push(OutputRecord {
            name: name.to_string(),
            sha256: hex(&Sha256::digest(contents)),
            bytes: contents.len() as u64,
        });
        Ok(path)
    }

    /// Record an already-written file (e.g. a checkpoint saved in place).
    pub fn record_existing(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(name))?;
        self.outputs.push(OutputRecord {
            name: name.to_string(),
            sha256: hex(&Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn outputs(&self) -> Vec<OutputRecord> {
        self.outputs.clone()
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let json = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        fs::write(self.dir.join("manifest.json"), json)?;
        Ok(())
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hashes_written_outputs() {
        let dir = std::env::temp_dir().join(format!(
            "traceprobe-manifest-{}-{}",
            std::process::id(),
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .unwrap()
                .as_nanos()
        ));
        let mut out = OutputDir::create(&dir).unwrap();
        out.write("data.csv", b"a,b\n1,2\n").unwrap();
        let records = out.outputs();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].name, "data.csv");
        assert_eq!(records[0].bytes, 8);
        // sha256 of the exact bytes; stable across runs.
        assert_eq!(records[0].sha256.len(), 64);
        fs::remove_dir_all(dir).unwrap();
    }
}
