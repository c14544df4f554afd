//! CSV and JSON artifact writers.
//!
//! Every file starts with the same provenance block: tool version, config
//! hash and grid descriptor. CSV files carry it as `#` comment rows followed
//! by a `# columns:` row; numbers are written with 17 significant digits so
//! they round-trip exactly. JSON summaries carry it under `"header"` and
//! keep the field order of the serialized structs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use nanowire_core::grids::GridConfig;

pub const TOOL_VERSION: &str = concat!("nanowire ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Serialize)]
pub struct Header {
    pub tool: String,
    pub config_sha256: String,
    pub grid: String,
}

impl Header {
    pub fn new(hash: &str, grid: String) -> Self {
        Self {
            tool: TOOL_VERSION.to_string(),
            config_sha256: hash.to_string(),
            grid,
        }
    }

    /// One-line descriptor of the device and momentum grids.
    pub fn describe(grid: &GridConfig) -> String {
        format!(
            "n_y={} n_z={}x{} widths={}x{} length={} n_x={} p_max={} n_p={}",
            grid.n_y, grid.n_z[0], grid.n_z[1], grid.widths[0], grid.widths[1], grid.length, grid.n_x, grid.p_max, grid.n_p
        )
    }
}

/// Seventeen significant digits in scientific notation; `nan`/`inf` for
/// non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

/// A CSV cell: floats get the fixed-precision format, integers stay exact.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    F(f64),
    I(u64),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::I(v as u64)
    }
}

pub struct CsvTable {
    columns: Vec<String>,
    body: String,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(columns: &[S]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.as_ref().to_string()).collect(),
            body: String::new(),
        }
    }

    pub fn row(&mut self, cells: &[Cell]) {
        assert_eq!(cells.len(), self.columns.len(), "row width must match the column schema");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.body.push(',');
            }
            match c {
                Cell::F(v) => self.body.push_str(&fmt_f64(*v)),
                Cell::I(v) => write!(self.body, "{v}").unwrap(),
            }
        }
        self.body.push('\n');
    }

    pub fn render(&self, header: &Header) -> String {
        let mut out = String::new();
        writeln!(out, "# tool: {}", header.tool).unwrap();
        writeln!(out, "# config_sha256: {}", header.config_sha256).unwrap();
        writeln!(out, "# grid: {}", header.grid).unwrap();
        writeln!(out, "# columns: {}", self.columns.join(",")).unwrap();
        out.push_str(&self.body);
        out
    }

    pub fn write(&self, dir: &Path, name: &str, header: &Header) -> std::io::Result<PathBuf> {
        let path = dir.join(name);
        fs::write(&path, self.render(header))?;
        Ok(path)
    }
}

#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    header: &'a Header,
    #[serde(flatten)]
    body: &'a T,
}

pub fn write_json<T: Serialize>(dir: &Path, name: &str, header: &Header, body: &T) -> std::io::Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(&Document { header, body }).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

/// Splits a CSV file into its `#` header rows and its body.
pub fn split_csv(text: &str) -> (Vec<&str>, Vec<&str>) {
    text.lines().partition(|l| l.starts_with('#'))
}
