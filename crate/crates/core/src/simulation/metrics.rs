//! Trimmed Monte-Carlo error summaries.

use nalgebra::DVector;
use serde::Serialize;

use crate::data::RegressionDataset;
use crate::error::{Error, Result};

/// `(1/((1−2α)K)) Σ_{i=lo}^{hi} v_(i)` with 1-based order statistics,
/// `lo = max(⌊αK⌋, 1)` and `hi = max(⌊(1−α)K⌋, lo)`.
///
/// The divisor is kept as written even where the number of summed terms
/// differs from `(1−2α)K`.
pub fn trimmed_mean(values: &[f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(0.0..0.5).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("trimming proportion {alpha} outside [0, 0.5)")));
    }
    let k = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = ((alpha * k as f64).floor() as usize).max(1);
    let hi = (((1.0 - alpha) * k as f64).floor() as usize).max(lo);
    let sum: f64 = sorted[lo - 1..hi].iter().sum();
    Ok(sum / ((1.0 - 2.0 * alpha) * k as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsSummary {
    pub emse: f64,
    pub ebias2: f64,
    pub evar: f64,
}

/// eMSE, eBias² and eVar over replications. The centre `β̄` is the
/// untrimmed mean.
pub fn evaluate_estimates(estimates: &[DVector<f64>], beta_true: &DVector<f64>, alpha: f64) -> Result<MetricsSummary> {
    if estimates.is_empty() {
        return Err(Error::EmptyInput);
    }
    let d = beta_true.len();
    if let Some(bad) = estimates.iter().find(|b| b.len() != d) {
        return Err(Error::DimensionMismatch(format!("estimate of length {} against {d} true coefficients", bad.len())));
    }
    let k = estimates.len() as f64;
    let mean = estimates.iter().fold(DVector::zeros(d), |acc, b| acc + b) / k;
    let errors: Vec<f64> = estimates.iter().map(|b| (b - beta_true).norm_squared()).collect();
    let spreads: Vec<f64> = estimates.iter().map(|b| (b - &mean).norm_squared()).collect();
    let summary = MetricsSummary {
        emse: trimmed_mean(&errors, alpha)?,
        ebias2: (&mean - beta_true).norm_squared(),
        evar: trimmed_mean(&spreads, alpha)?,
    };
    if alpha == 0.0 {
        let gap = summary.emse - summary.ebias2 - summary.evar;
        debug_assert!(
            gap.abs() <= 1e-10 * summary.emse.max(1.0),
            "bias-variance identity off by {gap}"
        );
    }
    Ok(summary)
}

/// Trimmed mean over replications of the mean squared prediction error.
pub fn emspe(fits: &[DVector<f64>], test_sets: &[RegressionDataset], alpha: f64) -> Result<f64> {
    if fits.is_empty() || test_sets.is_empty() {
        return Err(Error::EmptyInput);
    }
    if fits.len() != test_sets.len() {
        return Err(Error::DimensionMismatch(format!("{} fits for {} test sets", fits.len(), test_sets.len())));
    }
    let mspe = fits
        .iter()
        .zip(test_sets)
        .map(|(beta, test)| {
            let pred = crate::estimator::predict(beta, test.x())?;
            Ok((test.y() - pred).norm_squared() / test.n_rows() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    trimmed_mean(&mspe, alpha)
}
