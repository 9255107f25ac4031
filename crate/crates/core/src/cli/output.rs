//! Output files: CSV tables with round-trip-exact numbers, JSON reports and
//! the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// One CSV cell.
#[derive(Debug, Clone, Copy)]
pub enum Cell {
    Int(u64),
    Num(f64),
}

impl Cell {
    fn render(self) -> String {
        match self {
            Cell::Int(k) => k.to_string(),
            Cell::Num(x) => fmt_num(x),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(k: usize) -> Self {
        Cell::Int(k as u64)
    }
}

/// In-memory CSV table with a fixed header.
pub struct Table {
    writer: csv::Writer<Vec<u8>>,
    width: usize,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Result<Self> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer
            .write_record(header.iter().map(|h| h.as_ref()))
            .map_err(csv_error)?;
        Ok(Self {
            writer,
            width: header.len(),
        })
    }

    pub fn row(&mut self, cells: &[Cell]) -> Result<()> {
        debug_assert_eq!(cells.len(), self.width);
        self.writer
            .write_record(cells.iter().map(|c| c.render()))
            .map_err(csv_error)
    }

    pub fn into_bytes(self) -> Result<Vec<u8>> {
        self.writer
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Files produced by one run, in emission order.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<(String, Vec<u8>)>,
}

impl Outputs {
    pub fn add_table(&mut self, name: &str, table: Table) -> Result<()> {
        self.files.push((name.to_owned(), table.into_bytes()?));
        Ok(())
    }

    pub fn add_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        bytes.push(b'\n');
        self.files.push((name.to_owned(), bytes));
        Ok(())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.files.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file, then the manifest listing them with checksums.
    pub fn write(self, dir: &Path, header: ManifestHeader) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::with_capacity(self.files.len() + 1);
        let mut entries = Vec::with_capacity(self.files.len());
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            std::fs::write(&path, bytes)?;
            entries.push(FileEntry {
                name: name.clone(),
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            });
            written.push(path);
        }
        let manifest = Manifest {
            header,
            files: entries,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        bytes.push(b'\n');
        let path = dir.join(MANIFEST);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(written)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestHeader {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub config_sha256: String,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
struct Manifest {
    #[serde(flatten)]
    header: ManifestHeader,
    files: Vec<FileEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, -1.0 / 3.0, 2.0 * std::f64::consts::PI / 3.0, 1e-300, 0.0, 6.02e23] {
            let s = fmt_num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
        assert_eq!(fmt_num(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn table_layout() {
        let mut t = Table::new(&["k", "x"]).unwrap();
        t.row(&[Cell::from(3usize), Cell::from(0.5)]).unwrap();
        assert_eq!(String::from_utf8(t.into_bytes().unwrap()).unwrap(), "k,x\n3,5.0000000000000000e-1\n");
    }

    #[test]
    fn manifest_lists_every_file() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = Outputs::default();
        let mut t = Table::new(&["a"]).unwrap();
        t.row(&[Cell::from(1.0)]).unwrap();
        out.add_table("a.csv", t).unwrap();
        out.add_json("r.json", &serde_json::json!({"k": 1})).unwrap();
        let header = ManifestHeader {
            tool: "liouflow",
            version: "0",
            subcommand: "flow".into(),
            seed: 0,
            config_sha256: String::new(),
            config: serde_json::Value::Null,
        };
        let written = out.write(dir.path(), header).unwrap();
        assert_eq!(written.len(), 3);
        let m: serde_json::Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(MANIFEST)).unwrap()).unwrap();
        let files = m["files"].as_array().unwrap();
        assert_eq!(files.len(), 2);
        let a = std::fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(files[0]["sha256"], sha256_hex(&a));
    }
}
