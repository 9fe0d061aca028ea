//! CSV files with a commented header block.
//!
//! Every file starts with `# key: value` lines (tool version, config hash,
//! units) followed by an ordinary CSV table. Floats are written with 17
//! significant digits so that they parse back to the same `f64`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl OutputError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(path: &Path, message: impl Into<String>) -> Self {
        Self::Format {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }
}

/// `v` with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header entries written before the table; `config_hash` is always first.
pub struct Header<'a> {
    pub config_hash: &'a str,
    pub entries: Vec<(&'a str, String)>,
    /// `(column, unit)` pairs.
    pub units: &'a [(&'a str, &'a str)],
}

pub fn write_csv<I>(path: &Path, header: &Header, columns: &[&str], rows: I) -> Result<(), OutputError>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let file = File::create(path).map_err(|e| OutputError::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut lines = vec![
        format!("# macover {VERSION}"),
        format!("# config_hash: {}", header.config_hash),
    ];
    lines.extend(header.entries.iter().map(|(k, v)| format!("# {k}: {v}")));
    if !header.units.is_empty() {
        let units: Vec<String> = header.units.iter().map(|(c, u)| format!("{c}={u}")).collect();
        lines.push(format!("# units: {}", units.join(", ")));
    }
    for line in lines {
        writeln!(out, "{line}").map_err(|e| OutputError::io(path, e))?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(columns).map_err(|e| OutputError::csv(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| OutputError::csv(path, e))?;
    }
    w.flush().map_err(|e| OutputError::io(path, e))
}

/// A parsed CSV file: header entries, column names and raw cells.
#[derive(Debug, Clone)]
pub struct Table {
    pub path: PathBuf,
    pub meta: BTreeMap<String, String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn read_csv(path: &Path) -> Result<Table, OutputError> {
    let file = File::open(path).map_err(|e| OutputError::io(path, e))?;
    let mut meta = BTreeMap::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| OutputError::io(path, e))?;
        let Some(body) = line.strip_prefix('#') else {
            break;
        };
        if let Some((k, v)) = body.split_once(':') {
            meta.insert(k.trim().to_string(), v.trim().to_string());
        }
    }
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| OutputError::csv(path, e))?;
    let columns = r
        .headers()
        .map_err(|e| OutputError::csv(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| OutputError::csv(path, e))?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(Table {
        path: path.to_path_buf(),
        meta,
        columns,
        rows,
    })
}

impl Table {
    pub fn config_hash(&self) -> Option<&str> {
        self.meta.get("config_hash").map(String::as_str)
    }

    /// All values of a float column.
    pub fn column(&self, name: &str) -> Result<Vec<f64>, OutputError> {
        let idx = self
            .columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| OutputError::format(&self.path, format!("missing column `{name}`")))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.get(idx)
                    .and_then(|cell| cell.parse::<f64>().ok())
                    .ok_or_else(|| {
                        OutputError::format(&self.path, format!("row {}: bad `{name}` value", i + 1))
                    })
            })
            .collect()
    }
}
