//! Run directories and their manifests. Every subcommand that produces
//! artifacts works inside a fresh `out/<experiment>/<timestamp>/` directory
//! and finishes by writing `manifest.json`: the config snapshot, master seed,
//! schema versions, timestamps, and a SHA-256 per artifact. The manifest
//! alone carries everything needed to re-run the experiment.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const MANIFEST_VERSION: u32 = 1;

/// One output file, content-addressed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    /// Event/log schema the artifacts were written with.
    pub schema_version: u32,
    /// Subcommand that produced the run.
    pub experiment: String,
    /// Argv as invoked, for auditability.
    pub command_line: Vec<String>,
    /// Seed every random draw of the run derives from.
    pub master_seed: u64,
    pub started_utc: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_utc: Option<String>,
    /// `ok`, `aborted`, or `failed: <reason>`.
    pub status: String,
    /// Snapshot of the effective configuration, overrides applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<Value>,
    pub artifacts: Vec<Artifact>,
}

/// A run directory under construction. Artifacts are hashed as they are
/// written; [`RunDir::finish`] stamps the end time and writes the manifest,
/// so a manifest lands even when the run ends in an abort.
pub struct RunDir {
    pub path: PathBuf,
    manifest: RunManifest,
}

impl RunDir {
    /// Creates `out_root/<experiment>/<timestamp>/`, suffixing the timestamp
    /// when two runs land in the same millisecond.
    pub fn create(
        out_root: &Path,
        experiment: &str,
        master_seed: u64,
        config: Option<Value>,
    ) -> io::Result<RunDir> {
        let stamp = Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let base = out_root.join(experiment);
        fs::create_dir_all(&base)?;
        let mut path = base.join(&stamp);
        let mut suffix = 1u32;
        while path.exists() {
            path = base.join(format!("{stamp}-{suffix}"));
            suffix += 1;
        }
        fs::create_dir(&path)?;
        Ok(RunDir {
            path,
            manifest: RunManifest {
                manifest_version: MANIFEST_VERSION,
                schema_version: namegame::SCHEMA_VERSION,
                experiment: experiment.to_owned(),
                command_line: std::env::args().collect(),
                master_seed,
                started_utc: now_utc(),
                finished_utc: None,
                status: "running".to_owned(),
                config,
                artifacts: Vec::new(),
            },
        })
    }

    /// Writes an artifact and records its size and hash in the manifest.
    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        fs::write(self.path.join(name), bytes)?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        self.manifest.artifacts.push(Artifact {
            path: name.to_owned(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", hasher.finalize()),
        });
        Ok(())
    }

    /// Writes a pretty-printed JSON artifact.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(io::Error::other)?;
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    /// Stamps the end of the run and writes `manifest.json` itself.
    pub fn finish(mut self, status: &str) -> io::Result<PathBuf> {
        self.manifest.finished_utc = Some(now_utc());
        self.manifest.status = status.to_owned();
        let mut bytes = serde_json::to_vec_pretty(&self.manifest).map_err(io::Error::other)?;
        bytes.push(b'\n');
        fs::write(self.path.join("manifest.json"), bytes)?;
        Ok(self.path)
    }
}

fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Reads and parses a run directory's manifest.
pub fn read_manifest(run_dir: &Path) -> io::Result<RunManifest> {
    let text = fs::read_to_string(run_dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(io::Error::other)
}
