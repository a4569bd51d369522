//! CSV series files: header row, optional integer `t`, integer counts, real covariates.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use zinbarma_core::model::Dataset;

use crate::error::{AppError, Result};

/// Which columns to read.
#[derive(Debug, Clone)]
pub struct ColumnSelection {
    pub y: String,
    /// `None` takes every column other than `y` and `t`.
    pub covariates: Option<Vec<String>>,
}

impl Default for ColumnSelection {
    fn default() -> Self {
        ColumnSelection { y: "y".into(), covariates: None }
    }
}

pub fn load_csv_dataset(path: &Path, columns: &ColumnSelection) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_csv_dataset(file, columns).map_err(|message| AppError::Data { path: path.to_path_buf(), message })
}

fn parse_count(cell: &str) -> std::result::Result<u64, String> {
    let s = cell.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v < 0.0 => Err(format!("negative count `{s}`")),
        Ok(v) if v.fract() == 0.0 && v <= u64::MAX as f64 => Ok(v as u64),
        Ok(_) => Err(format!("non-integer count `{s}`")),
        Err(_) if s.is_empty() => Err("missing count".into()),
        Err(_) => Err(format!("unparseable count `{s}`")),
    }
}

/// Reads a dataset; errors name the one-based data row (the header is not counted).
pub fn read_csv_dataset<R: Read>(reader: R, columns: &ColumnSelection) -> std::result::Result<Dataset, String> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| format!("cannot read header: {e}"))?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err("empty file".into());
    }
    let find = |name: &str| headers.iter().position(|h| h == name);
    let yi = find(&columns.y).ok_or_else(|| format!("missing count column `{}`", columns.y))?;
    let ti = find("t");
    let cov_names: Vec<String> = match &columns.covariates {
        Some(list) => list.clone(),
        None => headers.iter().filter(|h| *h != columns.y && *h != "t").map(String::from).collect(),
    };
    let cov_idx: Vec<usize> = cov_names
        .iter()
        .map(|n| find(n).ok_or_else(|| format!("missing covariate column `{n}`")))
        .collect::<std::result::Result<_, _>>()?;

    let mut y = Vec::new();
    let mut time = ti.map(|_| Vec::new());
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); cov_idx.len()];
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(|e| format!("row {row}: {e}"))?;
        let cell = |i: usize| rec.get(i).unwrap_or("");
        y.push(parse_count(cell(yi)).map_err(|m| format!("row {row}: {m} in column `{}`", columns.y))?);
        if let (Some(i), Some(ts)) = (ti, time.as_mut()) {
            let c = cell(i);
            ts.push(c.parse::<i64>().map_err(|_| format!("row {row}: time index `{c}` is not an integer"))?);
        }
        for (j, &i) in cov_idx.iter().enumerate() {
            let c = cell(i);
            if c.is_empty() {
                return Err(format!("row {row}: missing value in column `{}`", cov_names[j]));
            }
            let v: f64 = c
                .parse()
                .map_err(|_| format!("row {row}: non-numeric value `{c}` in column `{}`", cov_names[j]))?;
            if !v.is_finite() {
                return Err(format!("row {row}: non-finite value in column `{}`", cov_names[j]));
            }
            cols[j].push(v);
        }
    }
    if y.is_empty() {
        return Err("file has a header but no data rows".into());
    }
    Ok(Dataset { y, columns: cov_names.into_iter().zip(cols).collect(), time })
}

pub fn write_csv_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    write_csv_to(file, data).map_err(|e| AppError::io(path, e))
}

pub fn write_csv_to<W: Write>(writer: W, data: &Dataset) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["t".to_string(), "y".to_string()];
    header.extend(data.columns.iter().map(|(n, _)| n.clone()));
    w.write_record(&header)?;
    for i in 0..data.len() {
        let t = data.time.as_ref().map_or(i as i64 + 1, |ts| ts[i]);
        let mut rec = vec![t.to_string(), data.y[i].to_string()];
        rec.extend(data.columns.iter().map(|(_, v)| fmt_f64(v[i])));
        w.write_record(&rec)?;
    }
    w.flush()
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

/// Writes a header and string rows as CSV.
pub fn write_table<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let err = |e: csv::Error| AppError::Data { path: path.to_path_buf(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.flush().map_err(|e| AppError::io(path, e))
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}
