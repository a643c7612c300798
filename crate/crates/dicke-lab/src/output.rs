// SPDX-License-Identifier: Apache-2.0

//! Output files: fixed-precision CSV, atomic writes and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, LabResult};

pub const MANIFEST: &str = "manifest.json";

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// One CSV field: a float (17 significant digits) or an exact integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    F(f64),
    U(u64),
}

impl Cell {
    pub fn value(self) -> f64 {
        match self {
            Cell::F(v) => v,
            Cell::U(v) => v as f64,
        }
    }

    fn render(self) -> String {
        match self {
            Cell::F(v) => fmt(v),
            Cell::U(v) => v.to_string(),
        }
    }

    fn parse(s: &str) -> Result<Self, std::num::ParseFloatError> {
        match s.parse::<u64>() {
            Ok(u) => Ok(Cell::U(u)),
            Err(_) => s.parse::<f64>().map(Cell::F),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::U(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

/// Columnar CSV with optional `# key=value` header lines.
#[derive(Debug, Default, Clone)]
pub struct Csv {
    pub meta: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Csv {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        self.push_cells(row.into_iter().map(Cell::F).collect());
    }

    pub fn push_cells(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.rows[row][col].value()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            s.push_str(&format!("# {k}={v}\n"));
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = r.iter().map(|c| c.render()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn parse(src: &str) -> LabResult<Self> {
        let mut csv = Csv::default();
        for (i, line) in src.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    csv.meta.push((k.trim().to_string(), v.trim().to_string()));
                }
                continue;
            }
            if csv.columns.is_empty() {
                csv.columns = line.split(',').map(|c| c.trim().to_string()).collect();
                continue;
            }
            let row = line
                .split(',')
                .map(|c| Cell::parse(c.trim()))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| LabError::data(format!("line {}: {e}", i + 1)))?;
            if row.len() != csv.columns.len() {
                return Err(LabError::data(format!(
                    "line {}: {} fields, expected {}",
                    i + 1,
                    row.len(),
                    csv.columns.len()
                )));
            }
            csv.rows.push(row);
        }
        if csv.columns.is_empty() {
            return Err(LabError::data("CSV has no header row"));
        }
        Ok(csv)
    }

    pub fn read(path: &Path) -> LabResult<Self> {
        let src = fs::read_to_string(path)
            .map_err(|e| LabError::data(format!("{}: {e}", path.display())))?;
        Self::parse(&src).map_err(|e| e.context(&path.display().to_string()))
    }

    pub fn column(&self, name: &str) -> LabResult<Vec<f64>> {
        let k = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LabError::data(format!("missing column `{name}`")))?;
        Ok(self.rows.iter().map(|r| r[k].value()).collect())
    }

    pub fn meta_values<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a str> + 'a {
        self.meta
            .iter()
            .filter(move |(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Write via a temporary sibling and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> LabResult<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| LabError::usage(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(
        ".{}.tmp{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

/// One command's record in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    /// Config snapshot in the config-file format.
    pub config: Option<String>,
    pub outputs: Vec<OutputFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub tool: String,
    pub toolchain: String,
    /// Keyed by subcommand; a rerun replaces its own entry.
    pub entries: BTreeMap<String, ManifestEntry>,
}

impl RunManifest {
    fn new() -> Self {
        Self {
            tool: format!("dicke-lab {}", env!("CARGO_PKG_VERSION")),
            toolchain: env!("DICKE_LAB_RUSTC").to_string(),
            entries: BTreeMap::new(),
        }
    }

    pub fn read(dir: &Path) -> LabResult<Option<Self>> {
        let p = dir.join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        let src = fs::read_to_string(&p)?;
        serde_json::from_str(&src)
            .map(Some)
            .map_err(|e| LabError::data(format!("{}: {e}", p.display())))
    }
}

/// Collects the files one command writes into a directory and finishes with
/// the manifest.
pub struct OutputDir {
    pub dir: PathBuf,
    entry: ManifestEntry,
    plot: Option<crate::plot::PlotStyle>,
}

impl OutputDir {
    pub fn new(dir: &Path, command: &str, argv: &[String]) -> LabResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            entry: ManifestEntry {
                command: command.to_string(),
                argv: argv.to_vec(),
                seed: None,
                config: None,
                outputs: Vec::new(),
            },
            plot: None,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.entry.seed = Some(seed);
        self
    }

    pub fn with_config(mut self, cfg: String) -> Self {
        self.entry.config = Some(cfg);
        self
    }

    pub fn with_plot(mut self, plot: Option<crate::plot::PlotStyle>) -> Self {
        self.plot = plot;
        self
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> LabResult<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        let digest = Sha256::digest(bytes);
        let sha256 = digest
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();
        self.entry.outputs.retain(|o| o.file != name);
        self.entry.outputs.push(OutputFile {
            file: name.to_string(),
            sha256,
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes a CSV and, when plotting is on, its SVG rendering.
    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> LabResult<()> {
        self.write(name, csv.render().as_bytes())?;
        if let Some(style) = self.plot {
            let svg = crate::plot::render(csv, name, style)?;
            let stem = name.strip_suffix(".csv").unwrap_or(name);
            self.write(&format!("{stem}.svg"), svg.as_bytes())?;
        }
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> LabResult<()> {
        let mut s = serde_json::to_string_pretty(value)
            .map_err(|e| LabError::data(format!("serializing {name}: {e}")))?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    pub fn finish(self) -> LabResult<PathBuf> {
        let mut m = RunManifest::read(&self.dir)?.unwrap_or_else(RunManifest::new);
        m.tool = RunManifest::new().tool;
        m.toolchain = RunManifest::new().toolchain;
        m.entries.insert(self.entry.command.clone(), self.entry);
        let mut s = serde_json::to_string_pretty(&m)
            .map_err(|e| LabError::data(format!("serializing manifest: {e}")))?;
        s.push('\n');
        let p = self.dir.join(MANIFEST);
        write_atomic(&p, s.as_bytes())?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut c = Csv::new(&["a", "b"]).meta("k", 3);
        c.push(vec![0.1, 1.0 / 3.0]);
        c.push(vec![-2.5e-300, 6.02214076e23]);
        c.push_cells(vec![Cell::U(u64::MAX), Cell::F(f64::NAN)]);
        let back = Csv::parse(&c.render()).unwrap();
        assert_eq!(back.rows[..2], c.rows[..2]);
        assert_eq!(back.rows[2][0], Cell::U(u64::MAX));
        assert!(back.value(2, 1).is_nan());
        assert_eq!(back.meta_values("k").collect::<Vec<_>>(), vec!["3"]);
    }

    #[test]
    fn fmt_uses_17_digits() {
        assert_eq!(fmt(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt(1.0), "1.0000000000000000e0");
    }
}
