//! CSV ingestion and emission, atomic file writes and autoregressive
//! featurization. Files hold one sample per row; in memory samples are
//! columns.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{DataMatrix, Labels};

/// Numeric CSV contents with an optional header row.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    pub fn column(&self, c: usize) -> Result<Vec<f64>> {
        if c >= self.width() {
            return Err(Error::invalid(format!(
                "column {c} out of range for a {}-column table",
                self.width()
            )));
        }
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }

    pub fn to_data(&self) -> Result<DataMatrix> {
        DataMatrix::from_samples(&self.rows)
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a numeric CSV. A first row with any non-numeric cell is taken as
/// the header; anywhere else it is an error.
pub fn ingest_csv(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path)?;
    parse_csv(&text, path)
}

pub fn parse_csv(text: &str, path: &Path) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(k + 1, |p| p.line() as usize);
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(k + 1, |p| p.line() as usize);
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
                    return Err(parse_err(path, line, format!("non-finite value in column {}", bad + 1)));
                }
                if let Some(first) = rows.first() {
                    if values.len() != first.len() {
                        return Err(parse_err(
                            path,
                            line,
                            format!("expected {} fields, found {}", first.len(), values.len()),
                        ));
                    }
                } else if let Some(h) = &header {
                    let h: &Vec<String> = h;
                    if values.len() != h.len() {
                        return Err(parse_err(
                            path,
                            line,
                            format!("expected {} fields, found {}", h.len(), values.len()),
                        ));
                    }
                }
                rows.push(values);
            }
            Err(_) if rows.is_empty() && header.is_none() => {
                header = Some(record.iter().map(str::to_owned).collect());
            }
            Err(_) => {
                let (col, cell) = record
                    .iter()
                    .enumerate()
                    .find(|(_, c)| c.parse::<f64>().is_err())
                    .expect("some cell failed to parse");
                return Err(parse_err(
                    path,
                    line,
                    format!("non-numeric value {cell:?} in column {}", col + 1),
                ));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no numeric rows"));
    }
    Ok(Table { header, rows })
}

pub fn read_data(path: &Path) -> Result<DataMatrix> {
    ingest_csv(path)?.to_data()
}

/// Labels from a one-column file, or from `column` of a wider one.
pub fn read_labels(path: &Path, column: Option<usize>) -> Result<Labels> {
    let table = ingest_csv(path)?;
    let c = match column {
        Some(c) => c,
        None if table.width() == 1 => 0,
        None => {
            return Err(Error::invalid(format!(
                "{} has {} columns; choose the label column",
                path.display(),
                table.width()
            )))
        }
    };
    Labels::new(table.column(c)?)
}

/// CSV text with shortest round-trip number formatting.
pub fn emit_csv(header: Option<&[&str]>, rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    if let Some(h) = header {
        out.push_str(&h.join(","));
        out.push('\n');
    }
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn data_rows(x: &DataMatrix) -> Vec<Vec<f64>> {
    x.to_samples()
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_csv(path: &Path, header: Option<&[&str]>, rows: &[Vec<f64>]) -> Result<()> {
    write_atomic(path, emit_csv(header, rows).as_bytes())
}

/// Single-column series.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let table = ingest_csv(path)?;
    if table.width() != 1 {
        return Err(Error::invalid(format!(
            "{} must hold a single column, found {}",
            path.display(),
            table.width()
        )));
    }
    table.column(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArSplit {
    pub x_train: DataMatrix,
    pub y_train: Labels,
    pub x_test: DataMatrix,
    pub y_test: Labels,
}

/// Lag features `(s[t-1], .., s[t-T])` with label `s[t]`, split
/// chronologically: the first `floor(split * k)` of the `k = len - T`
/// samples train.
pub fn make_autoregressive(series: &[f64], lags: usize, split: f64) -> Result<ArSplit> {
    if lags == 0 {
        return Err(Error::invalid("need at least one lag"));
    }
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::invalid(format!("split must lie in (0, 1), got {split}")));
    }
    if series.len() <= lags {
        return Err(Error::invalid(format!(
            "series of length {} is too short for {lags} lags",
            series.len()
        )));
    }
    let k = series.len() - lags;
    let n_train = (split * k as f64).floor() as usize;
    if n_train == 0 || n_train == k {
        return Err(Error::invalid(format!(
            "split {split} of {k} samples leaves an empty side"
        )));
    }
    let features = |t: usize| -> Vec<f64> { (1..=lags).map(|l| series[t - l]).collect() };
    let build = |range: std::ops::Range<usize>| -> Result<(DataMatrix, Labels)> {
        let cols: Vec<Vec<f64>> = range.clone().map(|s| features(s + lags)).collect();
        let x = DataMatrix::new(DMatrix::from_fn(lags, cols.len(), |r, c| cols[c][r]))?;
        let y = Labels::new(range.map(|s| series[s + lags]).collect())?;
        Ok((x, y))
    };
    let (x_train, y_train) = build(0..n_train)?;
    let (x_test, y_test) = build(n_train..k)?;
    Ok(ArSplit {
        x_train,
        y_train,
        x_test,
        y_test,
    })
}

/// Autoregressive features only, for a series whose every usable sample
/// is wanted (no split).
pub fn lag_features(series: &[f64], lags: usize) -> Result<(DataMatrix, Labels)> {
    if lags == 0 || series.len() <= lags {
        return Err(Error::invalid("series too short for the requested lags"));
    }
    let k = series.len() - lags;
    let x = DataMatrix::new(DMatrix::from_fn(lags, k, |r, c| series[c + lags - 1 - r]))?;
    let y = Labels::new(series[lags..].to_vec())?;
    Ok((x, y))
}
