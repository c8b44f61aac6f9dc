//! CSV tables and JSON manifests. Floats are written with 17 significant
//! digits so reruns compare byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST_FORMAT: &str = "wschaos-manifest/1";

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// In-memory CSV table, written in one go.
pub struct Csv {
    text: String,
    columns: usize,
    rows: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let text = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",") + "\n";
        Csv { text, columns: header.len(), rows: 0 }
    }

    /// Append a row of preformatted cells.
    pub fn row<S: AsRef<str>>(&mut self, cells: &[S]) {
        debug_assert_eq!(cells.len(), self.columns, "row width differs from the header");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            self.text.push_str(c.as_ref());
        }
        self.text.push('\n');
        self.rows += 1;
    }

    pub fn floats(&mut self, values: &[f64]) {
        let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
        self.row(&cells);
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }
}

/// Whitespace-separated two-column file for plotting tools.
pub fn two_columns(comment: &str, points: impl IntoIterator<Item = [f64; 2]>) -> String {
    let mut s = String::new();
    for line in comment.lines() {
        let _ = writeln!(s, "# {line}");
    }
    for [x, y] in points {
        let _ = writeln!(s, "{} {}", fmt_f64(x), fmt_f64(y));
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub command: String,
    pub version: String,
    pub overrides: Vec<String>,
    pub config: RunConfig,
    /// Derived inputs: normalized parameters, couplings, rescaled values.
    pub inputs: serde_json::Value,
    pub diagnostics: serde_json::Value,
    pub files: Vec<FileRecord>,
}

/// Collects the files of one command and writes its manifest last.
pub struct OutputSet {
    dir: PathBuf,
    files: Vec<FileRecord>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        Ok(OutputSet { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.push(FileRecord { path: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    pub fn write_csv(&mut self, name: &str, csv: &Csv) -> Result<PathBuf, CliError> {
        self.write(name, csv.as_str().as_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn finish(
        self,
        command: &str,
        config: &RunConfig,
        overrides: &[String],
        inputs: serde_json::Value,
        diagnostics: serde_json::Value,
    ) -> Result<PathBuf, CliError> {
        let manifest = Manifest {
            format: MANIFEST_FORMAT.to_string(),
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            overrides: overrides.to_vec(),
            config: config.clone(),
            inputs,
            diagnostics,
            files: self.files,
        };
        let path = self.dir.join(format!("{command}.manifest.json"));
        let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Columns of a trajectory table read back for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header: Vec<String> =
            lines.next().ok_or_else(|| CliError::Usage("empty table".into()))?.split(',').map(|s| s.trim().to_string()).collect();
        let mut rows = Vec::new();
        for (k, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(format!("row {}: {e}", k + 1)))?;
            if row.len() != header.len() {
                return Err(CliError::Usage(format!("row {} has {} cells, header has {}", k + 1, row.len(), header.len())));
            }
            rows.push(row);
        }
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip_exactly() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn table_reads_what_csv_writes() {
        let mut csv = Csv::new(&["t", "I_0"]);
        csv.floats(&[0.0, 0.25]);
        csv.floats(&[0.1, 1.0 / 3.0]);
        let t = Table::parse(csv.as_str()).unwrap();
        assert_eq!(t.column("I_0").unwrap(), vec![0.25, 1.0 / 3.0]);
        assert!(t.column("I_1").is_none());
        assert!(Table::parse("a,b\n1,2,3\n").is_err());
    }

    #[test]
    fn two_column_comment_lines() {
        let s = two_columns("launch 0.1\nstatus complete", [[1.0, 2.0]]);
        assert!(s.starts_with("# launch 0.1\n# status complete\n1.0"));
    }
}
