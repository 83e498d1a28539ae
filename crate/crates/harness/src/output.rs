//! Run directories, CSV tables and JSON manifests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seventeen significant digits: round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Six significant digits for console summaries.
pub fn fmt6(x: f64) -> String {
    format!("{x:.5e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Table with a header row; cells are written verbatim and must not contain
/// commas or newlines.
#[derive(Debug, Clone, Default)]
pub struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(
            row.len(),
            self.header.len(),
            "row width must match the header"
        );
        assert!(
            row.iter().all(|c| !c.contains([',', '\n'])),
            "csv cells must not contain delimiters: {row:?}"
        );
        self.rows.push(row);
    }

    pub fn push_numbers(&mut self, row: &[f64]) {
        self.push(row.iter().map(|&x| fmt17(x)).collect());
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "{}", self.header.join(","))?;
        for row in &self.rows {
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()
    }
}

/// Reproducible part of a manifest: everything except timestamps and the
/// outcome. Its hash names the run directory.
#[derive(Debug, Clone)]
pub struct ManifestCore {
    pub operation: String,
    pub body: Map<String, Value>,
}

impl ManifestCore {
    pub fn new(operation: &str) -> Self {
        let mut body = Map::new();
        body.insert("artifact_version".into(), json!(ARTIFACT_VERSION));
        body.insert("operation".into(), json!(operation));
        Self {
            operation: operation.into(),
            body,
        }
    }

    pub fn insert(&mut self, key: &str, value: Value) {
        self.body.insert(key.into(), value);
    }

    pub fn hash(&self) -> String {
        let text =
            serde_json::to_string(&Value::Object(self.body.clone())).expect("manifest serializes");
        sha256_hex(text.as_bytes())
    }

    /// `<root>/<operation>-<first 16 hex digits of the hash>`.
    pub fn run_dir(&self, root: &Path) -> PathBuf {
        root.join(format!("{}-{}", self.operation, &self.hash()[..16]))
    }

    pub fn write(&self, dir: &Path, started: u64, outcome: Value) -> io::Result<()> {
        let mut full = self.body.clone();
        full.insert("manifest_hash".into(), json!(self.hash()));
        full.insert(
            "timestamps".into(),
            json!({ "started_unix": started, "finished_unix": unix_now() }),
        );
        full.insert("outcome".into(), outcome);
        let text = serde_json::to_string_pretty(&Value::Object(full)).expect("manifest serializes");
        fs::write(dir.join("manifest.json"), text + "\n")
    }
}

pub fn write_json(path: &Path, value: &Value) -> io::Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [std::f64::consts::PI, 1e-300, -2.5e17, 0.1 + 0.2] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn hash_ignores_insertion_order() {
        let mut a = ManifestCore::new("tower");
        a.insert("x", json!(1));
        a.insert("y", json!(2));
        let mut b = ManifestCore::new("tower");
        b.insert("y", json!(2));
        b.insert("x", json!(1));
        assert_eq!(a.hash(), b.hash());
        assert!(a
            .run_dir(Path::new("runs"))
            .ends_with(format!("tower-{}", &a.hash()[..16])));
    }

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
