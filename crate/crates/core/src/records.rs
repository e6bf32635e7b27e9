//! Line-delimited JSON record files.
//!
//! Records are written by hand so every real prints with 17 significant
//! digits, which round-trips `f64` exactly and keeps files byte-stable.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use thiserror::Error;

use crate::channel::Point;

pub const SCHEMA: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {detail}")]
    Parse { path: PathBuf, line: usize, detail: String },
}

impl RecordError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RecordError::Io { path: path.to_path_buf(), source }
    }
}

/// `v` in scientific notation with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn point(p: Point) -> String {
    format!("[{},{}]", num(p[0]), num(p[1]))
}

pub fn points(ps: &[Point]) -> String {
    let inner: Vec<String> = ps.iter().map(|&p| point(p)).collect();
    format!("[{}]", inner.join(","))
}

/// JSON string literal for simple identifiers.
pub fn string(s: &str) -> String {
    serde_json::to_string(s).unwrap_or_else(|_| "\"\"".into())
}

/// Writes one record per line.
pub fn write_lines<I>(path: &Path, lines: I) -> Result<(), RecordError>
where
    I: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(|e| RecordError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| RecordError::io(path, e))?;
    }
    w.flush().map_err(|e| RecordError::io(path, e))
}

/// Appends records to an existing file (creating it if needed).
pub fn append_lines<I>(path: &Path, lines: I) -> Result<(), RecordError>
where
    I: IntoIterator<Item = String>,
{
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| RecordError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for line in lines {
        writeln!(w, "{line}").map_err(|e| RecordError::io(path, e))?;
    }
    w.flush().map_err(|e| RecordError::io(path, e))
}

/// Parses every non-blank line of `path` as a `T`.
pub fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, RecordError> {
    let file = File::open(path).map_err(|e| RecordError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| RecordError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| RecordError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
