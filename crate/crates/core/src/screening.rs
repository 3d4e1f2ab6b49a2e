//! Marginal covariate screening: one simple regression per covariate, then
//! Benjamini–Hochberg step-up over the p-values.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Per-covariate test outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateTest {
    pub t_stat: f64,
    pub p_value: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningResult {
    pub tests: Vec<CovariateTest>,
    pub fdr_level: f64,
}

impl ScreeningResult {
    /// 0-based indices of the selected covariates.
    pub fn selected(&self) -> Vec<usize> {
        self.tests.iter().enumerate().filter(|(_, t)| t.selected).map(|(j, _)| j).collect()
    }
}

/// t-statistic and two-sided p-value for the slope of `y` on `(1, x)`.
/// A constant column yields `(0, 1)`.
pub fn marginal_t_test(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!("covariate has {n} rows, response has {}", y.len())));
    }
    if n <= 2 {
        return Err(Error::InvalidArgument(format!("screening needs more than 2 rows, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if sxx <= (1e-12 * scale).powi(2) * nf {
        return Ok((0.0, 1.0));
    }
    let slope = sxy / sxx;
    let rss = (syy - slope * sxy).max(0.0);
    let df = nf - 2.0;
    let se = (rss / df / sxx).sqrt();
    let t = if se > 0.0 {
        slope / se
    } else if slope == 0.0 {
        0.0
    } else {
        slope.signum() * f64::INFINITY
    };
    let p = if t.is_infinite() {
        0.0
    } else {
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        (2.0 * dist.sf(t.abs())).min(1.0)
    };
    Ok((t, p))
}

/// Benjamini–Hochberg step-up: reject the `k` smallest p-values, where `k`
/// is the largest rank with `p_(k) ≤ k q / m`.
pub fn benjamini_hochberg(p_values: &[f64], q: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let k = order
        .iter()
        .enumerate()
        .filter(|(rank, &i)| p_values[i] <= (rank + 1) as f64 * q / m as f64)
        .map(|(rank, _)| rank + 1)
        .max()
        .unwrap_or(0);
    let mut out = vec![false; m];
    for &i in &order[..k] {
        out[i] = true;
    }
    out
}

/// Screens every column of `x` (which must not contain an intercept column;
/// constant columns are simply never selected).
pub fn screen_covariates(x: &DMatrix<f64>, y: &DVector<f64>, q: f64) -> Result<ScreeningResult> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidArgument(format!("FDR level must lie in (0, 1), got {q}")));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptyInput);
    }
    let ys = y.as_slice();
    let stats = x
        .column_iter()
        .map(|col| marginal_t_test(col.as_slice(), ys))
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = stats.iter().map(|s| s.1).collect();
    let selected = benjamini_hochberg(&p, q);
    let tests = stats
        .into_iter()
        .zip(selected)
        .map(|((t_stat, p_value), selected)| CovariateTest { t_stat, p_value, selected: selected && p_value < 1.0 })
        .collect();
    Ok(ScreeningResult { tests, fdr_level: q })
}
