//! Result tables and run metadata on disk.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use simfair::fairness::Violation;
use simfair::LabelVector;

use crate::error::{CliError, Result};
use crate::spec::RunSpec;

pub const SCHEMA: &str = "simfair/v1";

/// An in-memory CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| *c == name)
    }

    /// Cell of `row` under column `name`.
    pub fn get(&self, row: usize, name: &str) -> Option<&str> {
        Some(self.rows.get(row)?.get(self.column(name)?)?.as_str())
    }

    /// Schema comment line followed by the CSV body.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema={SCHEMA}\n");
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest decimal that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    v.to_string()
}

pub fn violation(v: Violation) -> String {
    match v {
        Violation::Value(x) => num(x),
        Violation::Undefined => "undefined".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedAdv {
    pub seed: u64,
    pub y_adv: LabelVector,
}

/// Sidecar describing how a result was produced. Contains no timestamps so
/// identical runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata<'a> {
    pub schema: &'static str,
    pub version: &'static str,
    pub run: &'a RunSpec,
    pub resolved_y_adv: Vec<ResolvedAdv>,
    pub rows: Option<usize>,
    pub files: Vec<String>,
}

impl<'a> Metadata<'a> {
    pub fn new(run: &'a RunSpec, resolved_y_adv: Vec<ResolvedAdv>) -> Self {
        Self {
            schema: SCHEMA,
            version: env!("CARGO_PKG_VERSION"),
            run,
            resolved_y_adv,
            rows: None,
            files: Vec::new(),
        }
    }
}

/// `results.csv` gets `results.csv.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("json encoding failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// Writes `table` to `out` and its metadata next to it.
pub fn write_table(out: &Path, table: &Table, mut meta: Metadata<'_>) -> Result<()> {
    write_file(out, &table.to_csv())?;
    meta.rows = Some(table.rows.len());
    meta.files = vec![out.display().to_string()];
    write_file(&sidecar_path(out), &to_json(&meta)?)
}
