//! CSV and JSON writers.  Every file starts with the toolkit version and the
//! config hash; floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::Result;
use crate::TOOLKIT_VERSION;

#[derive(Clone, Debug)]
pub struct Reporter {
    dir: PathBuf,
    header: String,
    written: Vec<PathBuf>,
}

/// A CSV cell.
#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    U(usize),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::I(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

fn render(cell: &Cell) -> String {
    match cell {
        Cell::F(v) => format_f64(*v),
        Cell::I(v) => v.to_string(),
        Cell::U(v) => v.to_string(),
        Cell::B(v) => v.to_string(),
        Cell::S(s) => s.clone(),
    }
}

pub fn header_line(config_hash: &str) -> String {
    format!("# {TOOLKIT_VERSION} config_sha256={config_hash}")
}

#[derive(Serialize)]
struct JsonDoc<'a, T: Serialize> {
    header: &'a str,
    data: &'a T,
}

impl Reporter {
    /// Creates `dir` if needed.  Call only after the configuration has been
    /// validated so that a rejected config leaves no files behind.
    pub fn new(dir: &Path, config_hash: &str) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Reporter { dir: dir.to_path_buf(), header: header_line(config_hash), written: Vec::new() })
    }

    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn csv(&mut self, name: &str, columns: &[&str], rows: &[Vec<Cell>]) -> Result<PathBuf> {
        let mut out = String::new();
        out.push_str(&self.header);
        out.push('\n');
        out.push_str(&columns.join(","));
        out.push('\n');
        for row in rows {
            let cells: Vec<String> = row.iter().map(render).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        self.write(name, out.as_bytes())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, data: &T) -> Result<PathBuf> {
        let doc = JsonDoc { header: &self.header, data };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Free-form text with the header as its first line.
    pub fn text(&mut self, name: &str, body: &[u8]) -> Result<PathBuf> {
        let mut out = Vec::with_capacity(body.len() + self.header.len() + 1);
        out.extend_from_slice(self.header.as_bytes());
        out.push(b'\n');
        out.extend_from_slice(body);
        self.write(name, &out)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.written.push(path.clone());
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_has_17_digits() {
        assert_eq!(format_f64(1.0), "1.0000000000000000e0");
        assert_eq!(format_f64(-0.1), "-1.0000000000000001e-1");
        assert_eq!(format_f64(f64::INFINITY), "inf");
    }

    #[test]
    fn csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Reporter::new(dir.path(), "abc").unwrap();
        let p = r.csv("t.csv", &["x", "n"], &[vec![0.5.into(), 3usize.into()]]).unwrap();
        let text = std::fs::read_to_string(p).unwrap();
        assert_eq!(text, format!("# {TOOLKIT_VERSION} config_sha256=abc\nx,n\n5.0000000000000000e-1,3\n"));
    }

    #[test]
    fn json_carries_header() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Reporter::new(dir.path(), "abc").unwrap();
        let p = r.json("t.json", &vec![1, 2]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        assert_eq!(v["header"], r.header());
        assert_eq!(v["data"][1], 2);
    }
}
