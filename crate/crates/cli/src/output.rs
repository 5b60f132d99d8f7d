//! Tab-separated data files and their digests.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// A data file written by an experiment: name relative to the output
/// directory and the SHA-256 of its bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Accumulates the files of one run in write order.
#[derive(Debug)]
pub struct OutputDir<'a> {
    root: &'a Path,
    written: Vec<OutputDigest>,
}

impl<'a> OutputDir<'a> {
    pub fn create(root: &'a Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root,
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.written.push(OutputDigest {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).expect("reports serialize infallibly");
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_tsv(&mut self, name: &str, table: &Tsv) -> Result<()> {
        self.write(name, table.render().as_bytes())
    }

    pub fn finish(self) -> Vec<OutputDigest> {
        self.written
    }
}

/// Tab-separated table with `#` comment lines above the column header.
#[derive(Debug, Clone, Default)]
pub struct Tsv {
    comments: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Tsv {
    pub fn new(title: &str, columns: &[&str]) -> Self {
        Self {
            comments: vec![title.to_string()],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn with_columns(title: &str, columns: Vec<String>) -> Self {
        Self {
            comments: vec![title.to_string()],
            columns,
            rows: Vec::new(),
        }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    /// Panics if the row width differs from the header.
    pub fn row(&mut self, cells: Vec<String>) -> &mut Self {
        assert_eq!(cells.len(), self.columns.len(), "row width must match the header");
        self.rows.push(cells);
        self
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.comments {
            let _ = writeln!(s, "# {c}");
        }
        let _ = writeln!(s, "{}", self.columns.join("\t"));
        for r in &self.rows {
            let _ = writeln!(s, "{}", r.join("\t"));
        }
        s
    }
}

/// Shortest round-trip decimal form, so files are exact and stable.
pub fn num(x: f64) -> String {
    format!("{x}")
}
