//! Run directories: atomic file writes, CSV emission and the manifest.

use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

pub const MANIFEST: &str = "manifest.json";
pub const AGGREGATE: &str = "aggregate.csv";
pub const RAW_DIR: &str = "raw";

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FileEntry {
    /// Path relative to the run directory, with `/` separators.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// A run directory that records the hash of every file written into it.
#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    files: Mutex<Vec<FileEntry>>,
}

impl RunDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root.join(RAW_DIR))?;
        Ok(Self { root: root.to_path_buf(), files: Mutex::new(Vec::new()) })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    /// Writes `bytes` to `relative` through a temporary file and a rename.
    pub fn write(&self, relative: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let target = self.root.join(relative);
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&target, bytes)?;
        let entry = FileEntry { path: relative.to_string(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 };
        let mut files = self.files.lock().expect("file list lock");
        files.retain(|f| f.path != entry.path);
        files.push(entry);
        Ok(())
    }

    pub fn write_csv<S: Serialize>(&self, relative: &str, rows: impl IntoIterator<Item = S>) -> anyhow::Result<()> {
        self.write(relative, &csv_bytes(rows)?)
    }

    /// Files written so far, sorted by path.
    pub fn files(&self) -> Vec<FileEntry> {
        let mut files = self.files.lock().expect("file list lock").clone();
        files.sort_by(|a, b| a.path.cmp(&b.path));
        files
    }
}

pub fn write_atomic(target: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let name = target.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = target.with_file_name(format!(".{name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, target)
}

pub fn csv_bytes<S: Serialize>(rows: impl IntoIterator<Item = S>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("flushing CSV: {e}"))
}

/// Outcome of one (series, seed) cell.
#[derive(Debug, Clone, Serialize)]
pub struct CellEntry {
    pub series: String,
    pub seed: u64,
    pub status: CellStatus,
    pub wall_clock_secs: f64,
    /// Scalar results of the cell, e.g. final greedy success.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CellStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub kind: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub harness_version: String,
    pub core_version: String,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub jobs: usize,
    pub cells: Vec<CellEntry>,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status == CellStatus::Error).count()
    }
}

/// Row of `aggregate.csv`.
#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct AggregateRow {
    pub series: String,
    pub index: usize,
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}
