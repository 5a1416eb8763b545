//! Synthetic workloads (independent, correlated, anti-correlated) and CSV
//! ingestion.
//!
//! Generator constants: correlated rows draw one uniform base value per row
//! and add independent jitter uniform on `[-B/20, B/20]` per attribute;
//! anti-correlated rows split a row total of `m*B/2` (jittered by the same
//! amount) across the attributes with uniform random weights. Everything is
//! clamped to `[0, B]`.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::plaintext::PlainDatabase;

/// Column names of the six-attribute basketball player statistics.
pub const NBA_COLUMNS: [&str; 6] = ["minutes", "points", "rebounds", "assists", "blocks", "steals"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DatasetKind {
    Corr,
    Inde,
    Anti,
    Csv,
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corr" => Ok(DatasetKind::Corr),
            "inde" => Ok(DatasetKind::Inde),
            "anti" => Ok(DatasetKind::Anti),
            "csv" => Ok(DatasetKind::Csv),
            other => Err(Error::InvalidSpec(format!(
                "unknown dataset kind '{other}' (expected corr, inde, anti or csv)"
            ))),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Corr => "corr",
            DatasetKind::Inde => "inde",
            DatasetKind::Anti => "anti",
            DatasetKind::Csv => "csv",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Attribute bound `B`.
    pub bound: u64,
    /// Multiplier applied to CSV values before rounding.
    pub scale: u32,
    pub path: Option<PathBuf>,
    /// CSV columns to load; all columns when empty.
    pub columns: Vec<String>,
}

impl DatasetSpec {
    pub fn synthetic(kind: DatasetKind, n: usize, m: usize, seed: u64) -> Self {
        DatasetSpec {
            kind,
            n,
            m,
            seed,
            bound: 10_000,
            scale: 1,
            path: None,
            columns: Vec::new(),
        }
    }

    pub fn with_bound(mut self, bound: u64) -> Self {
        self.bound = bound;
        self
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut spec = DatasetSpec::synthetic(DatasetKind::Inde, 0, 0, 0);
        let mut kind_seen = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidSpec(format!("line {}: expected key = value", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| -> Result<u64> {
                v.parse().map_err(|_| {
                    Error::InvalidSpec(format!("line {}: '{key}' is not a number: '{v}'", lineno + 1))
                })
            };
            match key {
                "kind" => {
                    spec.kind = value.parse()?;
                    kind_seen = true;
                }
                "n" => spec.n = num(value)? as usize,
                "m" => spec.m = num(value)? as usize,
                "seed" => spec.seed = num(value)?,
                "bound" => spec.bound = num(value)?,
                "scale" => spec.scale = num(value)? as u32,
                "path" => spec.path = Some(PathBuf::from(value)),
                "columns" => {
                    spec.columns = value
                        .split(',')
                        .map(|c| c.trim().to_string())
                        .filter(|c| !c.is_empty())
                        .collect()
                }
                other => {
                    return Err(Error::InvalidSpec(format!(
                        "line {}: unknown key '{other}'",
                        lineno + 1
                    )))
                }
            }
        }
        if !kind_seen {
            return Err(Error::InvalidSpec("missing 'kind'".into()));
        }
        Ok(spec)
    }

    pub fn from_config_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.kind == DatasetKind::Csv {
            if self.path.is_none() {
                return Err(Error::InvalidSpec("csv dataset needs a path".into()));
            }
            if self.scale == 0 {
                return Err(Error::InvalidSpec("scale must be at least 1".into()));
            }
            return Ok(());
        }
        if self.n == 0 || self.m == 0 {
            return Err(Error::InvalidSpec(format!(
                "n and m must be positive (n = {}, m = {})",
                self.n, self.m
            )));
        }
        if self.bound == 0 {
            return Err(Error::InvalidSpec("bound must be at least 1".into()));
        }
        Ok(())
    }
}

/// Generates (or, for CSV specs, loads) the dataset described by `spec`.
pub fn generate(spec: &DatasetSpec) -> Result<PlainDatabase> {
    spec.validate()?;
    if spec.kind == DatasetKind::Csv {
        let schema = CsvSchema {
            columns: spec.columns.clone(),
            scale: spec.scale,
        };
        return load_csv(spec.path.as_ref().expect("validated"), &schema);
    }
    let (n, m, b) = (spec.n, spec.m, spec.bound);
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let jitter = (b / 20) as i64;
    let mut values = Vec::with_capacity(n * m);
    let clamp = |x: i64| x.clamp(0, b as i64) as u64;
    for _ in 0..n {
        match spec.kind {
            DatasetKind::Inde => values.extend((0..m).map(|_| rng.gen_range(0..=b))),
            DatasetKind::Corr => {
                let base = rng.gen_range(0..=b) as i64;
                for _ in 0..m {
                    values.push(clamp(base + rng.gen_range(-jitter..=jitter)));
                }
            }
            DatasetKind::Anti => {
                let total = (m as u64 * b / 2) as i64 + rng.gen_range(-jitter..=jitter);
                let weights: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() + 1e-9).collect();
                let sum: f64 = weights.iter().sum();
                for w in weights {
                    values.push(clamp((total as f64 * w / sum).round() as i64));
                }
            }
            DatasetKind::Csv => unreachable!(),
        }
    }
    PlainDatabase::new(n, m, values)?.with_bound(b)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CsvSchema {
    /// Columns to read, in order; empty means every column.
    pub columns: Vec<String>,
    pub scale: u32,
}

impl CsvSchema {
    pub fn nba(scale: u32) -> Self {
        CsvSchema {
            columns: NBA_COLUMNS.iter().map(|c| c.to_string()).collect(),
            scale,
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PlainDatabase> {
    load_csv_from_reader(File::open(path)?, schema)
}

/// Reads a headed CSV. Data rows are numbered from 1 in diagnostics.
pub fn load_csv_from_reader<R: Read>(input: R, schema: &CsvSchema) -> Result<PlainDatabase> {
    let scale = schema.scale.max(1);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(input);
    let csv_err = |row: usize, column: &str, message: String| Error::Csv {
        row,
        column: column.to_string(),
        message,
    };
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(0, "", e.to_string()))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Empty("csv file has no header"));
    }
    let names: Vec<String> = if schema.columns.is_empty() {
        headers.iter().map(str::to_string).collect()
    } else {
        schema.columns.clone()
    };
    let idx: Vec<usize> = names
        .iter()
        .map(|name| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| csv_err(0, name, "column missing from header".into()))
        })
        .collect::<Result<_>>()?;

    let mut values = Vec::new();
    let mut n = 0;
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_err(row, "", e.to_string()))?;
        for (name, &i) in names.iter().zip(&idx) {
            let cell = record.get(i).unwrap_or("");
            if cell.is_empty() {
                return Err(csv_err(row, name, "missing value".into()));
            }
            let x: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, name, format!("not a number: '{cell}'")))?;
            if !x.is_finite() || x < 0.0 {
                return Err(csv_err(row, name, format!("value must be non-negative: '{cell}'")));
            }
            let scaled = (x * scale as f64).round();
            if scaled > u64::MAX as f64 / 2.0 {
                return Err(csv_err(row, name, format!("value too large: '{cell}'")));
            }
            values.push(scaled as u64);
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Empty("csv file has no data rows"));
    }
    let mut db = PlainDatabase::new(n, names.len(), values)?;
    db.scale = scale;
    Ok(db)
}

/// Writes `db` as CSV with the given header (default `a1..am`).
pub fn write_csv<W: Write>(db: &PlainDatabase, out: W, header: Option<&[String]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let default: Vec<String> = (1..=db.m).map(|j| format!("a{j}")).collect();
    let header = header.unwrap_or(&default);
    if header.len() != db.m {
        return Err(Error::LengthMismatch {
            what: "csv header",
            left: db.m,
            right: header.len(),
        });
    }
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in db.rows() {
        w.write_record(row.iter().map(u64::to_string)).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(db: &PlainDatabase, path: impl AsRef<Path>, header: Option<&[String]>) -> Result<()> {
    write_csv(db, File::create(path)?, header)
}
