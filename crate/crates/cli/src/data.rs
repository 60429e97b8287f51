//! CSV ingestion and output.
//!
//! Files carry a header row. Covariate columns are the ones whose name starts
//! with `x`; the response is the column named `y`. Undefined values are
//! written as `NA`.

use std::io::Write;
use std::path::Path;

use gpa_core::{Estimate, Sample};

use crate::error::CliError;

pub const NA: &str = "NA";

/// Covariate columns, the response column and all data rows.
struct Table {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let rows = reader.records().collect::<Result<Vec<_>, _>>().map_err(csv_err)?;
    Ok(Table { headers, rows })
}

fn covariate_columns(headers: &[String]) -> Vec<usize> {
    headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with(['x', 'X']))
        .map(|(i, _)| i)
        .collect()
}

fn parse_cell(path: &Path, line: usize, column: &str, cell: &str) -> Result<f64, CliError> {
    let bad = |msg: String| CliError::Data {
        path: path.display().to_string(),
        msg: format!("row {line}, column `{column}`: {msg}"),
    };
    if cell == NA {
        return Err(bad("missing value".into()));
    }
    let v: f64 = cell.parse().map_err(|_| bad(format!("`{cell}` is not a number")))?;
    if !v.is_finite() {
        return Err(bad(format!("`{cell}` is not finite")));
    }
    Ok(v)
}

fn no_columns(path: &Path, what: &str) -> CliError {
    CliError::Data {
        path: path.display().to_string(),
        msg: what.to_string(),
    }
}

/// Training data: `x...` covariates and a `y` response.
pub fn read_sample(path: &Path) -> Result<Sample, CliError> {
    let table = read_table(path)?;
    let xcols = covariate_columns(&table.headers);
    if xcols.is_empty() {
        return Err(no_columns(path, "no covariate column (names must start with `x`)"));
    }
    let ycol = table
        .headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| no_columns(path, "no response column named `y`"))?;
    let mut x = Vec::with_capacity(table.rows.len() * xcols.len());
    let mut y = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        for &c in &xcols {
            x.push(parse_cell(path, i + 1, &table.headers[c], &row[c])?);
        }
        y.push(parse_cell(path, i + 1, "y", &row[ycol])?);
    }
    Ok(Sample::new(x, y, xcols.len())?)
}

/// Query points, row-major. Uses the `x...` columns when present and every
/// column otherwise. Returns the points and their column names.
pub fn read_points(path: &Path) -> Result<(Vec<f64>, Vec<String>), CliError> {
    let table = read_table(path)?;
    let mut cols = covariate_columns(&table.headers);
    if cols.is_empty() {
        cols = (0..table.headers.len()).collect();
    }
    if cols.is_empty() {
        return Err(no_columns(path, "no columns"));
    }
    let mut out = Vec::with_capacity(table.rows.len() * cols.len());
    for (i, row) in table.rows.iter().enumerate() {
        for &c in &cols {
            out.push(parse_cell(path, i + 1, &table.headers[c], &row[c])?);
        }
    }
    let names = cols.iter().map(|&c| table.headers[c].clone()).collect();
    Ok((out, names))
}

pub fn fmt_estimate(e: Estimate) -> String {
    e.map_or_else(|| NA.to_string(), |v| v.to_string())
}

/// Writes CSV to `path`, or to stdout when `path` is `None`.
pub fn write_csv(path: Option<&Path>, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let sink: Box<dyn Write> = match path {
        Some(p) => Box::new(std::fs::File::create(p).map_err(|source| CliError::Io {
            path: p.to_path_buf(),
            source,
        })?),
        None => Box::new(std::io::stdout().lock()),
    };
    let label = path.map_or_else(|| "<stdout>".into(), Path::to_path_buf);
    let csv_err = |source| CliError::Csv {
        path: label.clone(),
        source,
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: label.clone(),
        source,
    })?;
    Ok(())
}
