//! File formats. All CSV files have a header row; reals are written with 17
//! significant digits so they read back bit for bit.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use super::CliError;

pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, CliError> {
    let f = File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(f)))
}

pub fn write_row<W: Write>(w: &mut csv::Writer<W>, path: &Path, row: &[String]) -> Result<(), CliError> {
    w.write_record(row).map_err(|e| io_err(path, e))
}

pub fn finish<W: Write>(mut w: csv::Writer<W>, path: &Path) -> Result<(), CliError> {
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Observations as `dataset_id -> [(t, y)]`, sorted by `t`.
pub fn read_observations(path: &Path) -> Result<BTreeMap<usize, Vec<(usize, f64)>>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: missing column {name}", path.display())))
    };
    let (cd, ct, cy) = (col("dataset_id")?, col("t")?, col("y")?);
    let mut out: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let bad = |what: &str| CliError::Config(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let d: usize = rec[cd].trim().parse().map_err(|_| bad("dataset_id"))?;
        let t: usize = rec[ct].trim().parse().map_err(|_| bad("t"))?;
        let y: f64 = rec[cy].trim().parse().map_err(|_| bad("y"))?;
        if !y.is_finite() {
            return Err(bad("y"));
        }
        out.entry(d).or_default().push((t, y));
    }
    for (d, rows) in out.iter_mut() {
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CliError::Config(format!("{}: dataset {d} repeats a time index", path.display())));
        }
    }
    Ok(out)
}

/// Long-format parameter draws: `file -> (param names in first-seen order,
/// per-param series)`.
pub struct SampleTable {
    pub params: Vec<String>,
    pub series: Vec<Vec<f64>>,
}

pub fn read_samples(path: &Path) -> Result<SampleTable, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let headers = r.headers().map_err(|e| io_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["iteration", "param", "value"] {
        return Err(CliError::Config(format!(
            "{}: expected columns iteration,param,value",
            path.display()
        )));
    }
    let mut params: Vec<String> = Vec::new();
    let mut series: Vec<Vec<f64>> = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| io_err(path, e))?;
        let v: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("{}: row {}: bad value", path.display(), line + 2)))?;
        let k = match params.iter().position(|p| p == &rec[1]) {
            Some(k) => k,
            None => {
                params.push(rec[1].to_string());
                series.push(Vec::new());
                params.len() - 1
            }
        };
        series[k].push(v);
    }
    Ok(SampleTable { params, series })
}
