//! CSV tables, JSON envelopes and the output directory.

use std::io;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(usize),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v)
    }
}

fn format_num(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        // 17 significant digits
        format!("{v:.16e}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.header.len(), "row width differs from header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r
                .iter()
                .map(|c| match c {
                    Cell::Num(v) => format_num(*v),
                    Cell::Int(n) => n.to_string(),
                })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Column names `prefix1..prefixK`.
pub fn numbered(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Common header of every JSON artifact.
pub fn envelope(command: &str, config_hash: &str, result: impl Serialize) -> Value {
    json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config_sha256": config_hash,
        "result": result,
    })
}

/// Writes artifacts into one directory and remembers what it wrote.
#[derive(Debug)]
pub struct Output {
    pub dir: PathBuf,
    pub plot: bool,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn new(dir: &Path, plot: bool) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), plot, written: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> io::Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, contents)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, table: &Table) -> io::Result<()> {
        self.write(name, &table.to_csv())
    }

    pub fn json(&mut self, name: &str, value: &Value) -> io::Result<()> {
        let mut s = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
        s.push('\n');
        self.write(name, &s)
    }

    /// Skipped under `--no-plot`.
    pub fn svg(&mut self, name: &str, svg: &str) -> io::Result<()> {
        if self.plot {
            self.write(name, svg)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_full_precision() {
        let mut t = Table::new(["epsilon", "nodes"]);
        t.push(vec![0.1.into(), 17usize.into()]);
        t.push(vec![f64::NAN.into(), 0usize.into()]);
        let s = t.to_csv();
        assert_eq!(s, "epsilon,nodes\n1.0000000000000001e-1,17\nnan,0\n");
        let back: f64 = s.lines().nth(1).unwrap().split(',').next().unwrap().parse().unwrap();
        assert_eq!(back, 0.1);
    }

    #[test]
    fn numbered_columns() {
        assert_eq!(numbered("rho_V", 2), vec!["rho_V1", "rho_V2"]);
    }
}
