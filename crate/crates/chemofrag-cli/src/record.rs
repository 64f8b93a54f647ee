//! Run records: a JSON manifest per run plus CSV time series.
//!
//! Column orders are part of the tool's output contract and stay stable
//! within a minor version. Floats are written with Rust's shortest
//! round-trip formatting, so identical metric values produce identical
//! bytes.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

/// Manifest of one CLI invocation.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub verb: String,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub k_values: Vec<u64>,
    pub wall_clock_s: f64,
    /// Output name to file path, relative to the record's directory.
    pub outputs: BTreeMap<String, String>,
    /// Scalar summary metrics; identical reruns reproduce these exactly.
    pub metrics: BTreeMap<String, f64>,
    /// Tolerances and budgets the run was judged against.
    pub tolerances: BTreeMap<String, f64>,
    /// Strict-mode findings; empty means every enabled check passed.
    pub strict_failures: Vec<String>,
}

impl RunRecord {
    pub fn new(verb: &str, config_hash: &str, seeds: Vec<u64>, k_values: Vec<u64>) -> Self {
        RunRecord {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            verb: verb.to_string(),
            config_hash: config_hash.to_string(),
            seeds,
            k_values,
            wall_clock_s: 0.0,
            outputs: BTreeMap::new(),
            metrics: BTreeMap::new(),
            tolerances: BTreeMap::new(),
            strict_failures: Vec::new(),
        }
    }
}

/// Writes the manifest as `manifest.json` under `dir`, creating the
/// directory if needed; returns the manifest path.
pub fn persist_record(record: &RunRecord, dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    fs::write(&path, json + "\n")?;
    Ok(path)
}

/// Writes one CSV file with the given header and rows under `dir`;
/// returns the file name for the manifest's output map.
pub fn write_csv(
    dir: &Path,
    name: &str,
    header: &[&str],
    rows: &[Vec<String>],
) -> io::Result<String> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(name.to_string())
}

/// Formats a float with shortest round-trip representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}
