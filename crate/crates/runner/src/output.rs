//! CSV and JSON writers with a fixed, locale-free number format.

use std::fs;
use std::path::{Path, PathBuf};

use chetaev_core::{ComplexField, Grid, RealField};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Shortest round-trip decimal; exponent form outside `[1e-4, 1e15)`.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// A CSV table buffered in memory; written with LF endings and minimal quoting.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<(), OutputError> {
        let wrap = |source| OutputError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(wrap)?;
        w.write_record(&self.header).map_err(wrap)?;
        for r in &self.rows {
            w.write_record(r).map_err(wrap)?;
        }
        w.flush().map_err(|source| OutputError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn coord_names(grid: &Grid) -> &'static [&'static str] {
    if grid.dim() == 1 {
        &["x"]
    } else {
        &["x", "y"]
    }
}

fn node_cells(grid: &Grid, i: usize) -> Vec<String> {
    let q = grid.node(i);
    let mut row = vec![i.to_string()];
    row.extend((0..grid.dim()).map(|a| num(q[a])));
    row
}

/// `index, x[, y], re, im` for every node.
pub fn snapshot_table(psi: &ComplexField) -> Table {
    let grid = psi.grid();
    let mut header = vec!["index"];
    header.extend(coord_names(grid));
    header.extend(["re", "im"]);
    let mut t = Table::new(&header);
    for (i, z) in psi.values().iter().enumerate() {
        let mut row = node_cells(grid, i);
        row.push(num(z.re));
        row.push(num(z.im));
        t.push(row);
    }
    t
}

/// `index, x[, y]` followed by one column per field; masked values are empty.
pub fn fields_table(grid: &Grid, columns: &[(&str, &RealField)]) -> Table {
    let mut header = vec!["index"];
    header.extend(coord_names(grid));
    header.extend(columns.iter().map(|(n, _)| *n));
    let mut t = Table::new(&header);
    for i in 0..grid.len() {
        let mut row = node_cells(grid, i);
        for (_, f) in columns {
            row.push(if f.is_masked(i) { String::new() } else { num(f.values()[i]) });
        }
        t.push(row);
    }
    t
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn write_json(path: &Path, value: &Value) -> Result<(), OutputError> {
    let mut text = serde_json::to_string_pretty(value).expect("JSON values always serialize");
    text.push('\n');
    fs::write(path, text).map_err(|source| OutputError::Io {
        path: path.to_path_buf(),
        source,
    })
}
