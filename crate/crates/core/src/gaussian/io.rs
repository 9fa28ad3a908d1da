use std::io::{Read, Write};

use nalgebra::DMatrix;

use super::GaussianError;

fn csv_err(e: impl std::fmt::Display) -> GaussianError {
    GaussianError::Csv(e.to_string())
}

fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>), GaussianError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let ids: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|x| x.parse::<f64>().map_err(|e| csv_err(format!("row {}: {x:?}: {e}", line + 1))))
            .collect::<Result<Vec<f64>, _>>()?;
        if row.len() != ids.len() {
            return Err(csv_err(format!("row {} has {} fields", line + 1, row.len())));
        }
        rows.push(row);
    }
    Ok((ids, rows))
}

/// Samples CSV: a header of observed ids, one row per observation.
pub fn read_samples_csv<R: Read>(r: R) -> Result<(Vec<String>, DMatrix<f64>), GaussianError> {
    let (ids, rows) = read_table(r)?;
    let k = ids.len();
    let x = DMatrix::from_fn(rows.len(), k, |i, j| rows[i][j]);
    Ok((ids, x))
}

/// Covariance CSV: a header of observed ids and a square symmetric body.
pub fn read_covariance_csv<R: Read>(r: R) -> Result<(Vec<String>, DMatrix<f64>), GaussianError> {
    let (ids, rows) = read_table(r)?;
    let k = ids.len();
    if rows.len() != k {
        return Err(csv_err(format!("{} rows for {k} variables", rows.len())));
    }
    let s = DMatrix::from_fn(k, k, |i, j| rows[i][j]);
    if (&s - s.transpose()).abs().max() > 1e-9 * s.abs().max().max(1.0) {
        return Err(csv_err("covariance is not symmetric"));
    }
    Ok((ids, s))
}

pub fn write_samples_csv<W: Write>(w: W, ids: &[String], x: &DMatrix<f64>) -> Result<(), GaussianError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ids).map_err(csv_err)?;
    for row in x.row_iter() {
        wtr.write_record(row.iter().map(|v| format!("{v:.17e}"))).map_err(csv_err)?;
    }
    wtr.flush().map_err(csv_err)
}
