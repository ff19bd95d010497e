//! CSV tables and the JSON run summary.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// A table with a fixed column order; cells are preformatted.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: impl Into<String>, columns: &[&'static str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let j = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_str()).collect())
    }
}

/// Shortest round-trip formatting, scientific outside `[1e-4, 1e6)`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e6).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Writes the header and rows with RFC 4180 quoting.
pub fn write_csv<W: io::Write>(table: &Table, w: W) -> io::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let io_err = |e: csv::Error| io::Error::other(e.to_string());
    wr.write_record(&table.columns).map_err(io_err)?;
    for r in &table.rows {
        wr.write_record(r).map_err(io_err)?;
    }
    wr.flush()
}

pub fn emit_csv(table: &Table, path: &Path) -> io::Result<()> {
    write_csv(table, fs::File::create(path)?)
}

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub threads: usize,
    pub parallel: bool,
    /// Measured constants and headline numbers.
    pub constants: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub tables: Vec<String>,
}

impl Summary {
    pub fn versions() -> BTreeMap<String, String> {
        let mut v = BTreeMap::new();
        v.insert("necklab-cli".into(), env!("CARGO_PKG_VERSION").into());
        v.insert("necklab".into(), necklab::VERSION.into());
        v
    }
}

pub fn emit_summary(summary: &Summary, path: &Path) -> io::Result<()> {
    let text = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    fs::write(path, text + "\n")
}

pub fn read_summary(path: &Path) -> io::Result<Summary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(io::Error::other)
}
