//! CSV plumbing shared by every file format in the crate.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use csv::StringRecord;

use crate::error::{Error, Result};

/// Formats a real with 17 significant digits (round-trips exactly).
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn fmt_opt_real(v: Option<f64>) -> String {
    v.map(fmt_real).unwrap_or_default()
}

/// A parsed CSV file: header plus data rows tagged with their 1-based line.
pub struct Table {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<(u64, StringRecord)>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::MissingInput(path.to_path_buf()));
        }
        let csv_err = |source| Error::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(csv_err)?;
        let header = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let line = rec.position().map_or(0, |p| p.line());
            rows.push((line, rec));
        }
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.iter().map(String::as_str).ne(expected.iter().copied()) {
            return Err(self.parse_error(
                1,
                format!("expected header {:?}, found {:?}", expected, self.header),
            ));
        }
        Ok(())
    }

    pub fn parse_error(&self, line: u64, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }

    pub fn field<'r>(&self, line: u64, rec: &'r StringRecord, col: usize) -> Result<&'r str> {
        rec.get(col)
            .ok_or_else(|| self.parse_error(line, format!("missing column {col}")))
    }

    pub fn parse<F: FromStr>(&self, line: u64, rec: &StringRecord, col: usize) -> Result<F> {
        let raw = self.field(line, rec, col)?;
        raw.parse().map_err(|_| {
            self.parse_error(
                line,
                format!("cannot parse {:?} in column {:?}", raw, self.column_name(col)),
            )
        })
    }

    pub fn parse_opt<F: FromStr>(&self, line: u64, rec: &StringRecord, col: usize) -> Result<Option<F>> {
        if self.field(line, rec, col)?.is_empty() {
            Ok(None)
        } else {
            self.parse(line, rec, col).map(Some)
        }
    }

    /// Parses every column of every row as a real.
    pub fn real_rows(&self) -> Result<Vec<Vec<f64>>> {
        self.rows
            .iter()
            .map(|(line, rec)| (0..rec.len()).map(|c| self.parse(*line, rec, c)).collect())
            .collect()
    }

    fn column_name(&self, col: usize) -> &str {
        self.header.get(col).map_or("?", String::as_str)
    }
}

/// Buffered CSV writer that creates parent directories.
pub struct CsvOut {
    path: PathBuf,
    inner: csv::Writer<fs::File>,
}

impl CsvOut {
    pub fn create<S: AsRef<str>>(path: &Path, header: &[S]) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        let inner = csv::Writer::from_path(path).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = Self {
            path: path.to_path_buf(),
            inner,
        };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<()> {
        self.inner
            .write_record(fields.iter().map(|s| s.as_ref()))
            .map_err(|source| Error::Csv {
                path: self.path.clone(),
                source,
            })
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(|source| Error::Io {
            path: self.path.clone(),
            source,
        })
    }
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
