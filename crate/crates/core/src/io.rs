//! CSV and JSON persistence used by the CLI.
//!
//! Data files hold three numeric columns with an optional header row:
//! `f_hz,eps_prime,sigma_s_per_m` for tissue and `f_hz,z_re_ohm,z_im_ohm`
//! for battery spectra. Numbers are written with `{:e}`, which is the
//! shortest representation that parses back to the same value, so re-reading
//! and re-writing an emitted file reproduces it byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fitting::{BatteryData, TissueData};
use crate::Complex64;

pub const TISSUE_COLUMNS: [&str; 3] = ["f_hz", "eps_prime", "sigma_s_per_m"];
pub const BATTERY_COLUMNS: [&str; 3] = ["f_hz", "z_re_ohm", "z_im_ohm"];

/// Raw numeric rows of a CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

/// Parses a numeric CSV with exactly `columns` fields per row. A first row
/// whose first field is not a number is taken as the header.
pub fn parse_table(text: &str, columns: usize) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut header = None;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(i + 1, |p| p.line() as usize);
            Error::Parse {
                line,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            header = Some(rec.iter().map(str::to_string).collect());
            continue;
        }
        if rec.len() != columns {
            return Err(Error::Parse {
                line,
                column: rec.len().min(columns) + 1,
                message: format!("expected {columns} fields, found {}", rec.len()),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    column: c + 1,
                    message: format!("not a number: {f:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Data("file contains no data rows".into()));
    }
    Ok(Table { header, rows })
}

fn column(t: &Table, c: usize) -> Vec<f64> {
    t.rows.iter().map(|r| r[c]).collect()
}

pub fn parse_tissue(text: &str) -> Result<TissueData> {
    let t = parse_table(text, 3)?;
    TissueData::new(column(&t, 0), column(&t, 1), column(&t, 2))
}

pub fn parse_battery(text: &str) -> Result<BatteryData> {
    let t = parse_table(text, 3)?;
    let z = t.rows.iter().map(|r| Complex64::new(r[1], r[2])).collect();
    BatteryData::new(column(&t, 0), z)
}

pub fn read_tissue(path: &Path) -> Result<TissueData> {
    parse_tissue(&fs::read_to_string(path)?)
}

pub fn read_battery(path: &Path) -> Result<BatteryData> {
    parse_battery(&fs::read_to_string(path)?)
}

/// Formats a table with a header row and `{:e}` numbers.
pub fn format_table(header: &[&str], rows: &[Vec<f64>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r.iter().map(|v| format!("{v:e}")))
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ASCII"))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn tissue_table(d: &TissueData) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|k| vec![d.f[k], d.eps_prime[k], d.sigma[k]])
        .collect()
}

pub fn battery_table(d: &BatteryData) -> Vec<Vec<f64>> {
    (0..d.len())
        .map(|k| vec![d.f[k], d.z[k].re, d.z[k].im])
        .collect()
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Files written by one command. Unless [`Outputs::commit`] is called, every
/// file written through it is removed when it is dropped.
#[derive(Debug, Default)]
pub struct Outputs {
    written: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        self.written.push(path.to_path_buf());
        fs::write(path, contents)?;
        Ok(())
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn commit(mut self) -> Vec<PathBuf> {
        self.committed = true;
        std::mem::take(&mut self.written)
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.written {
                let _ = fs::remove_file(p);
            }
        }
    }
}

/// Process exit status for an error: 2 parameter validation, 3 numerical
/// invariant failure, 4 input data failure.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Conditioning(_) | Error::Json(_) => 2,
        Error::Numerical { .. } | Error::IllConditioned { .. } | Error::WindowTooNarrow { .. } => 3,
        Error::Data(_) | Error::Parse { .. } | Error::Io(_) => 4,
    }
}
