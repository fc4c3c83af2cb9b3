//! Run manifests: what was run, on which inputs, with which settings.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use stresslab::features::FEATURE_SET_VERSION;
use stresslab::learners::{default_grid, Family};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// File name only, so moving a run directory keeps the hash stable.
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 over everything below except outputs and timestamps.
    pub manifest_hash: String,
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileDigest>,
    pub feature_set_version: String,
    pub grid_version: String,
    pub tool_version: String,
    pub outputs: Vec<FileDigest>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

#[derive(Serialize)]
struct Hashed<'a> {
    command: &'a str,
    config: &'a serde_json::Value,
    seeds: &'a [u64],
    inputs: &'a [FileDigest],
    feature_set_version: &'a str,
    grid_version: &'a str,
    tool_version: &'a str,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> std::io::Result<FileDigest> {
    Ok(FileDigest {
        name: path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: sha256_hex(&fs::read(path)?),
    })
}

/// Short digest of every default hyperparameter grid.
pub fn grid_version() -> String {
    let grids: Vec<_> = Family::ALL.iter().map(|&f| default_grid(f)).collect();
    let text = serde_json::to_string(&grids).expect("grids serialize");
    sha256_hex(text.as_bytes())[..16].to_string()
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seeds: Vec<u64>, inputs: Vec<FileDigest>) -> Self {
        let mut m = RunManifest {
            manifest_hash: String::new(),
            command: command.to_string(),
            config,
            seeds,
            inputs,
            feature_set_version: FEATURE_SET_VERSION.to_string(),
            grid_version: grid_version(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        };
        m.manifest_hash = m.compute_hash();
        m
    }

    pub fn compute_hash(&self) -> String {
        let h = Hashed {
            command: &self.command,
            config: &self.config,
            seeds: &self.seeds,
            inputs: &self.inputs,
            feature_set_version: &self.feature_set_version,
            grid_version: &self.grid_version,
            tool_version: &self.tool_version,
        };
        sha256_hex(serde_json::to_string(&h).expect("manifest serializes").as_bytes())
    }

    /// Records output digests and writes `manifest_<command>.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[&Path]) -> std::io::Result<RunManifest> {
        self.outputs = outputs.iter().map(|p| digest_file(p)).collect::<std::io::Result<_>>()?;
        self.finished_unix_s = unix_now();
        let text = serde_json::to_string_pretty(&self).map_err(std::io::Error::other)? + "\n";
        fs::write(dir.join(format!("manifest_{}.json", self.command)), text)?;
        Ok(self)
    }
}
