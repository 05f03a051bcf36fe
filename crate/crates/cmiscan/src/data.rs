//! Data containers and the dataset CSV format.
//!
//! A [`Dataset`] couples covariates with optional outcome-bound columns:
//! `w_lo`/`w_hi` delimit the interval known to contain the latent outcome.
//! Unbounded ends are IEEE infinities in memory and `inf`/`-inf` (or an
//! empty cell) on disk.
//!
//! The CSV layout is a header row naming covariate columns `x1..xd` plus the
//! optional bound columns `wl` and `wh`:
//!
//! ```csv
//! x1,wl,wh
//! 0.25,-0.1,0.4
//! 0.50,,        # wl empty => -inf, wh empty => +inf
//! 0.75,-inf,0.2
//! ```
//!
//! Parsing is strict — unknown columns, non-finite covariates, NaN bounds,
//! and `wl > wh` rows are rejected with the offending 1-based line number.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Covariate block: `n` points in `dim` dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    values: Vec<f64>,
    dim: usize,
}

impl Covariates {
    /// Wraps a row-major buffer of `n * dim` finite values.
    pub fn new(values: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("covariate dimension must be at least 1".into()));
        }
        if values.is_empty() || values.len() % dim != 0 {
            return Err(Error::InvalidInput(format!(
                "covariate buffer length {} is not a positive multiple of dimension {}",
                values.len(),
                dim
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "covariate ({}, {}) is not finite: {}",
                pos / dim,
                pos % dim,
                values[pos]
            )));
        }
        Ok(Self { values, dim })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.values.len() / self.dim
    }

    /// Covariate dimension d_X.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One observation's coordinates.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    /// Iterator over one coordinate across observations.
    pub fn column(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(k).step_by(self.dim).copied()
    }

    /// Per-coordinate (min, max) pairs.
    pub fn bounds(&self) -> Vec<(f64, f64)> {
        (0..self.dim)
            .map(|k| {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for v in self.column(k) {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            })
            .collect()
    }
}

/// Observations: covariates plus optional outcome-bound columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Covariates,
    w_lo: Option<Vec<f64>>,
    w_hi: Option<Vec<f64>>,
}

impl Dataset {
    /// Assembles a dataset, checking column lengths, NaNs, and `wl <= wh`.
    pub fn new(
        covariates: Covariates,
        w_lo: Option<Vec<f64>>,
        w_hi: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = covariates.n();
        for (name, col) in [("wl", &w_lo), ("wh", &w_hi)] {
            if let Some(col) = col {
                if col.len() != n {
                    return Err(Error::InvalidInput(format!(
                        "column {name} has {} rows but there are {n} covariate rows",
                        col.len()
                    )));
                }
                if let Some(pos) = col.iter().position(|v| v.is_nan()) {
                    return Err(Error::InvalidInput(format!("{name} is NaN at row {pos}")));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (&w_lo, &w_hi) {
            for (i, (l, h)) in lo.iter().zip(hi).enumerate() {
                if l > h {
                    return Err(Error::InvalidInput(format!(
                        "bounds out of order at row {i}: wl = {l} > wh = {h}"
                    )));
                }
            }
        }
        Ok(Self { covariates, w_lo, w_hi })
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.covariates.n()
    }

    /// The covariate block.
    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    /// Lower outcome bounds, if present.
    pub fn w_lo(&self) -> Option<&[f64]> {
        self.w_lo.as_deref()
    }

    /// Upper outcome bounds, if present.
    pub fn w_hi(&self) -> Option<&[f64]> {
        self.w_hi.as_deref()
    }

    /// Reads the CSV format described in the module docs.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .flexible(false)
            .from_reader(reader);

        let headers = rdr
            .headers()
            .map_err(|e| csv_error(1, e))?
            .iter()
            .map(|h| h.trim().to_ascii_lowercase())
            .collect::<Vec<_>>();

        let mut x_cols: Vec<(usize, usize)> = Vec::new(); // (coordinate index, column)
        let mut wl_col = None;
        let mut wh_col = None;
        for (col, name) in headers.iter().enumerate() {
            if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                if idx == 0 {
                    return Err(Error::Parse {
                        line: 1,
                        message: "covariate columns are numbered from x1".into(),
                    });
                }
                x_cols.push((idx - 1, col));
            } else if name == "wl" {
                wl_col = Some(col);
            } else if name == "wh" {
                wh_col = Some(col);
            } else {
                return Err(Error::Parse {
                    line: 1,
                    message: format!(
                        "unrecognized column \"{name}\"; expected x1..xd, wl, wh"
                    ),
                });
            }
        }
        x_cols.sort_unstable();
        let dim = x_cols.len();
        if dim == 0 {
            return Err(Error::Parse {
                line: 1,
                message: "no covariate columns x1..xd found".into(),
            });
        }
        if x_cols.iter().enumerate().any(|(want, &(got, _))| want != got) {
            return Err(Error::Parse {
                line: 1,
                message: format!("covariate columns must be x1..x{dim} with no gaps"),
            });
        }

        let mut xs = Vec::new();
        let mut wl = wl_col.map(|_| Vec::new());
        let mut wh = wh_col.map(|_| Vec::new());
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, csv::Position::line);
                csv_error(line, e)
            })?;
            let line = record.position().map_or(0, csv::Position::line);
            for &(_, col) in &x_cols {
                let field = &record[col];
                let v = parse_finite(field)
                    .ok_or_else(|| bad_value(line, "covariate", field))?;
                xs.push(v);
            }
            if let (Some(col), Some(out)) = (wl_col, wl.as_mut()) {
                let v = parse_bound(&record[col], f64::NEG_INFINITY)
                    .ok_or_else(|| bad_value(line, "wl", &record[col]))?;
                out.push(v);
            }
            if let (Some(col), Some(out)) = (wh_col, wh.as_mut()) {
                let v = parse_bound(&record[col], f64::INFINITY)
                    .ok_or_else(|| bad_value(line, "wh", &record[col]))?;
                out.push(v);
            }
            if let (Some(lo), Some(hi)) = (wl.as_ref(), wh.as_ref()) {
                let (l, h) = (*lo.last().unwrap(), *hi.last().unwrap());
                if l > h {
                    return Err(Error::Parse {
                        line,
                        message: format!("bounds out of order: wl = {l} > wh = {h}"),
                    });
                }
            }
        }
        if xs.is_empty() {
            return Err(Error::Parse { line: 1, message: "no data rows".into() });
        }
        Dataset::new(Covariates::new(xs, dim)?, wl, wh)
    }

    /// Reads a dataset CSV from disk.
    pub fn from_csv_path<P: AsRef<Path>>(path: P) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| {
            Error::InvalidInput(format!("cannot open {}: {e}", path.display()))
        })?;
        Self::from_csv_reader(file)
    }

    /// Writes the CSV format described in the module docs.
    ///
    /// Finite values round-trip exactly (shortest-representation formatting);
    /// infinities are written as `inf`/`-inf`.
    pub fn to_csv_writer<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let dim = self.covariates.dim();
        let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
        if self.w_lo.is_some() {
            header.push("wl".into());
        }
        if self.w_hi.is_some() {
            header.push("wh".into());
        }
        wtr.write_record(&header)?;
        let mut row: Vec<String> = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            row.clear();
            row.extend(self.covariates.row(i).iter().map(|v| format_value(*v)));
            if let Some(lo) = &self.w_lo {
                row.push(format_value(lo[i]));
            }
            if let Some(hi) = &self.w_hi {
                row.push(format_value(hi[i]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes a dataset CSV to disk.
    pub fn to_csv_path<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = File::create(path.as_ref())?;
        self.to_csv_writer(file)
    }
}

fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

/// Parses a finite float; `None` on anything else.
fn parse_finite(field: &str) -> Option<f64> {
    field.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Parses an outcome bound: empty means `empty_value`, `inf`/`+inf`/`-inf`
/// (case-insensitive) are infinities, otherwise a finite float.
fn parse_bound(field: &str, empty_value: f64) -> Option<f64> {
    if field.is_empty() {
        return Some(empty_value);
    }
    match field.to_ascii_lowercase().as_str() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => parse_finite(field),
    }
}

fn bad_value(line: u64, what: &str, field: &str) -> Error {
    Error::Parse { line, message: format!("cannot parse {what} value \"{field}\"") }
}

fn csv_error(line: u64, e: csv::Error) -> Error {
    Error::Parse { line, message: e.to_string() }
}
