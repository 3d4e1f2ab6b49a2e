//! CSV reading and writing.
//!
//! Dialect: comma separated, `.` decimal point, one header row, UTF-8, no
//! quoting. Floats are written with 17 significant digits so every `f64`
//! survives a round trip. The response is always the last column.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::sampling::SamplingProbabilities;
use crate::tuning::TuningReport;

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        // NaN / inf spelled the way `str::parse::<f64>` reads them back
        format!("{v}")
    }
}

/// Reads a dataset whose last column is the response. With `intercept` an
/// all-ones column is prepended to the design.
pub fn read_dataset<P: AsRef<Path>>(path: P, intercept: bool) -> Result<RegressionDataset> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Csv(format!("{}: {e}", path.as_ref().display())))?;
    read_dataset_from(file, intercept)
}

pub fn read_dataset_from<R: Read>(reader: R, intercept: bool) -> Result<RegressionDataset> {
    let (header, rows) = read_numeric_table(reader)?;
    if header.len() < 2 {
        return Err(Error::Csv("need at least one covariate column and a response column".into()));
    }
    let n = rows.len();
    let p = header.len() - 1;
    let offset = usize::from(intercept);
    let x = DMatrix::from_fn(n, p + offset, |i, j| if j < offset { 1.0 } else { rows[i][j - offset] });
    let y = DVector::from_fn(n, |i, _| rows[i][p]);
    RegressionDataset::new(x, y)
}

/// Header and numeric rows of a CSV table. Every row must match the header
/// width.
pub fn read_numeric_table<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(Error::Csv(format!(
                "row {} has {} fields, header has {}",
                i + 1,
                record.len(),
                header.len()
            )));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(j, field)| {
                field
                    .parse::<f64>()
                    .map_err(|_| Error::Csv(format!("row {}, column {}: cannot parse `{field}`", i + 1, j + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    Ok((header, rows))
}

/// Writes every design column followed by the response; header
/// `x0,…,x{d-1},y`.
pub fn write_dataset<W: Write>(mut out: W, data: &RegressionDataset) -> Result<()> {
    let d = data.n_cols();
    let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..data.n_rows() {
        let mut fields: Vec<String> = (0..d).map(|j| format_float(data.x()[(i, j)])).collect();
        fields.push(format_float(data.y()[i]));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// `index,score,pi`, one row per external observation.
pub fn write_probabilities<W: Write>(mut out: W, scores: &[f64], probs: &SamplingProbabilities) -> Result<()> {
    writeln!(out, "index,score,pi")?;
    for (i, (s, p)) in scores.iter().zip(probs.pi()).enumerate() {
        writeln!(out, "{i},{},{}", format_float(*s), format_float(*p))?;
    }
    Ok(())
}

/// Reads the `pi` column written by [`write_probabilities`].
pub fn read_probabilities<R: Read>(reader: R) -> Result<Vec<f64>> {
    let (header, rows) = read_numeric_table(reader)?;
    let col = header
        .iter()
        .position(|h| h == "pi")
        .ok_or_else(|| Error::Csv("missing `pi` column".into()))?;
    Ok(rows.iter().map(|r| r[col]).collect())
}

/// One row per λ: `lambda,converged,df,rss_target,rss_external,aic,bic`.
/// Criteria that could not be computed are written as `NaN`.
pub fn write_tuning_report<W: Write>(mut out: W, report: &TuningReport) -> Result<()> {
    writeln!(out, "lambda,converged,df,rss_target,rss_external,aic,bic")?;
    for row in &report.rows {
        let c = row.criteria;
        let get = |f: fn(&crate::data::ModelCriteria) -> f64| c.as_ref().map_or(f64::NAN, f);
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            format_float(row.lambda),
            row.converged,
            format_float(get(|c| c.df)),
            format_float(get(|c| c.rss_target)),
            format_float(get(|c| c.rss_external)),
            format_float(get(|c| c.aic)),
            format_float(get(|c| c.bic)),
        )?;
    }
    Ok(())
}
