//! CSV formats: curve tables (`id,t1,...,tJ`), responses (`id,y`) and the
//! plain outputs.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{CliError, CliResult};

/// Curves of one functional predictor sampled on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub sample_ids: Vec<String>,
    pub grid: Vec<f64>,
    /// `n × J`
    pub values: DMatrix<f64>,
}

impl CurveTable {
    pub fn new(sample_ids: Vec<String>, grid: Vec<f64>, values: DMatrix<f64>) -> CliResult<Self> {
        if values.nrows() != sample_ids.len() || values.ncols() != grid.len() {
            return Err(CliError::input(format!(
                "curve table shape {}x{} does not match {} ids and {} grid points",
                values.nrows(),
                values.ncols(),
                sample_ids.len(),
                grid.len()
            )));
        }
        check_grid(&grid).map_err(CliError::input)?;
        Ok(Self {
            sample_ids,
            grid,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }
}

fn check_grid(grid: &[f64]) -> Result<(), String> {
    if grid.len() < 2 {
        return Err("a curve grid needs at least two points".into());
    }
    if let Some(w) = grid.windows(2).find(|w| w[1] <= w[0]) {
        return Err(format!("grid is not strictly increasing at {} -> {}", w[0], w[1]));
    }
    Ok(())
}

fn parse_number(field: &str, path: &Path, line: u64, column: usize) -> CliResult<f64> {
    let trimmed = field.trim();
    if trimmed.is_empty() {
        return Err(CliError::input(format!(
            "{}: line {line}, column {column}: missing value",
            path.display()
        )));
    }
    let v: f64 = trimmed.parse().map_err(|_| {
        CliError::input(format!(
            "{}: line {line}, column {column}: '{trimmed}' is not a number",
            path.display()
        ))
    })?;
    if !v.is_finite() {
        return Err(CliError::input(format!(
            "{}: line {line}, column {column}: non-finite value '{trimmed}'",
            path.display()
        )));
    }
    Ok(v)
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let at = e
        .position()
        .map(|p| format!("line {}: ", p.line()))
        .unwrap_or_default();
    CliError::input(format!("{}: {at}{e}", path.display()))
}

pub fn read_curves(path: &Path) -> CliResult<CurveTable> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() < 3 {
        return Err(CliError::input(format!(
            "{}: header must be 'id' followed by at least two grid points",
            path.display()
        )));
    }
    let grid = headers
        .iter()
        .enumerate()
        .skip(1)
        .map(|(c, h)| parse_number(h, path, 1, c + 1))
        .collect::<CliResult<Vec<f64>>>()?;
    check_grid(&grid).map_err(|m| CliError::input(format!("{}: header: {m}", path.display())))?;

    let mut ids = Vec::new();
    let mut values = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(CliError::input(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                record.len()
            )));
        }
        ids.push(record[0].to_string());
        for (c, field) in record.iter().enumerate().skip(1) {
            values.push(parse_number(field, path, line, c + 1)?);
        }
    }
    if ids.is_empty() {
        return Err(CliError::input(format!("{}: no curves", path.display())));
    }
    let values = DMatrix::from_row_slice(ids.len(), grid.len(), &values);
    CurveTable::new(ids, grid, values)
}

pub fn read_response(path: &Path) -> CliResult<(Vec<String>, DVector<f64>)> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.len() != 2 {
        return Err(CliError::input(format!("{}: header must be 'id,y'", path.display())));
    }
    let mut ids = Vec::new();
    let mut y = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(CliError::input(format!(
                "{}: line {line}: expected 2 fields, found {}",
                path.display(),
                record.len()
            )));
        }
        ids.push(record[0].to_string());
        y.push(parse_number(&record[1], path, line, 2)?);
    }
    if ids.is_empty() {
        return Err(CliError::input(format!("{}: no responses", path.display())));
    }
    Ok((ids, DVector::from_vec(y)))
}

pub fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::input(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_curves(path: &Path, table: &CurveTable) -> CliResult<()> {
    let mut out = String::from("id");
    for t in &table.grid {
        out.push_str(&format!(",{t}"));
    }
    out.push('\n');
    for (i, id) in table.sample_ids.iter().enumerate() {
        out.push_str(id);
        for v in table.values.row(i).iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_response(path: &Path, ids: &[String], y: &DVector<f64>) -> CliResult<()> {
    let mut out = String::from("id,y\n");
    for (id, v) in ids.iter().zip(y.iter()) {
        out.push_str(&format!("{id},{v}\n"));
    }
    write_text(path, &out)
}

/// Checks that every table lists the same samples in the same order.
pub fn check_ids(tables: &[CurveTable], response_ids: Option<&[String]>) -> CliResult<()> {
    let first = &tables[0].sample_ids;
    for (m, t) in tables.iter().enumerate().skip(1) {
        if t.sample_ids.len() != first.len() {
            return Err(CliError::input(format!(
                "predictor {} has {} curves but predictor 1 has {}",
                m + 1,
                t.sample_ids.len(),
                first.len()
            )));
        }
        if let Some(i) = (0..first.len()).find(|&i| t.sample_ids[i] != first[i]) {
            return Err(CliError::input(format!(
                "predictor {} row {} has id '{}' but predictor 1 has '{}'",
                m + 1,
                i + 1,
                t.sample_ids[i],
                first[i]
            )));
        }
    }
    if let Some(ids) = response_ids {
        if ids.len() != first.len() {
            return Err(CliError::input(format!(
                "response has {} values but the curves have {} samples",
                ids.len(),
                first.len()
            )));
        }
        if let Some(i) = (0..ids.len()).find(|&i| ids[i] != first[i]) {
            return Err(CliError::input(format!(
                "response row {} has id '{}' but the curves have '{}'",
                i + 1,
                ids[i],
                first[i]
            )));
        }
    }
    Ok(())
}
