//! Choosing λ by information criteria.
//!
//! The pooled residual sum of squares combines the target residuals with the
//! residuals of the reduced external model `(I − P_{X_B})(y_B − γ̂)`. Degrees of
//! freedom are the nonzero-shift count plus one for ℓ1 and the trace of the
//! fused hat matrix for ℓ2.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FitResult, FusedProblem, ModelCriteria, PenaltyKind};
use crate::error::{Error, Result};
use crate::estimator::{fit_penalized, SolverSettings};
use crate::linalg;

/// Shifts with magnitude at or below this count as zero in the ℓ1 df.
pub const NONZERO_SHIFT_THRESHOLD: f64 = 1e-10;

/// Default ratio between the smallest and largest grid value.
pub const DEFAULT_GRID_RATIO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    #[serde(rename = "AIC", alias = "aic")]
    Aic,
    #[serde(rename = "BIC", alias = "bic")]
    Bic,
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "aic" => Ok(Criterion::Aic),
            "bic" => Ok(Criterion::Bic),
            other => Err(Error::InvalidArgument(format!("unknown criterion `{other}`"))),
        }
    }
}

/// Largest useful λ: the biggest absolute residual of the pooled weighted
/// least-squares fit, at which every ℓ1 shift is thresholded to zero.
pub fn lambda_max(problem: &FusedProblem<'_>) -> Result<f64> {
    let target = problem.target();
    let (x_b, y_b, w) = problem.selected_rows();
    let v = linalg::gram(target.x()) + linalg::weighted_gram(&x_b, &w);
    let chol = linalg::cholesky(&v).ok_or(Error::SingularFusedGram)?;
    let beta = chol.solve(&(target.x().tr_mul(target.y()) + x_b.tr_mul(&y_b.component_mul(&w))));
    let resid = y_b - x_b * beta;
    Ok(linalg::inf_norm(&resid))
}

/// Descending log-spaced grid from `λ_max` to `λ_max / 10⁴`.
pub fn lambda_grid(problem: &FusedProblem<'_>, size: usize) -> Result<Vec<f64>> {
    lambda_grid_with_ratio(problem, size, DEFAULT_GRID_RATIO)
}

pub fn lambda_grid_with_ratio(problem: &FusedProblem<'_>, size: usize, ratio: f64) -> Result<Vec<f64>> {
    if size < 2 {
        return Err(Error::InvalidArgument("grid size must be at least 2".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidArgument(format!("grid ratio {ratio} outside (0, 1)")));
    }
    let top = lambda_max(problem)?.max(f64::EPSILON);
    let log_top = top.ln();
    let log_bottom = (top * ratio).ln();
    let grid = (0..size)
        .map(|i| {
            if i == 0 {
                top
            } else if i == size - 1 {
                top * ratio
            } else {
                let t = i as f64 / (size - 1) as f64;
                (log_top + t * (log_bottom - log_top)).exp()
            }
        })
        .collect();
    Ok(grid)
}

/// `(RSS_T, RSS_B*)` for a fit on this problem.
pub fn rss_components(problem: &FusedProblem<'_>, fit: &FitResult) -> Result<(f64, f64)> {
    rss_parts(problem, &fit.beta, &fit.gamma)
}

fn rss_parts(problem: &FusedProblem<'_>, beta: &DVector<f64>, gamma: &DVector<f64>) -> Result<(f64, f64)> {
    let target = problem.target();
    let rss_t = linalg::sq_norm(&(target.y() - target.x() * beta));
    let (x_b, y_b, _) = problem.selected_rows();
    if gamma.len() != y_b.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} shifts for {} selected rows",
            gamma.len(),
            y_b.len()
        )));
    }
    let adjusted = y_b - gamma;
    if x_b.nrows() == 0 {
        return Ok((rss_t, 0.0));
    }
    let coef = match linalg::cholesky(&linalg::gram(&x_b)) {
        Some(chol) => chol.solve(&x_b.tr_mul(&adjusted)),
        None => {
            // rank-deficient subsample: project onto the column space it spans
            let svd = x_b.clone().svd(true, true);
            let cutoff = svd.singular_values.max() * 1e-12 * x_b.nrows().max(x_b.ncols()) as f64;
            svd.solve(&adjusted, cutoff).map_err(|_| Error::SingularGram)?
        }
    };
    let rss_b = linalg::sq_norm(&(adjusted - x_b * coef));
    Ok((rss_t, rss_b))
}

pub fn degrees_of_freedom(problem: &FusedProblem<'_>, fit: &FitResult) -> Result<f64> {
    df_parts(problem, &fit.gamma)
}

fn df_parts(problem: &FusedProblem<'_>, gamma: &DVector<f64>) -> Result<f64> {
    let penalty = problem.penalty();
    match penalty.kind() {
        PenaltyKind::L1 => {
            let nonzero = gamma.iter().filter(|g| g.abs() > NONZERO_SHIFT_THRESHOLD).count();
            Ok(nonzero as f64 + 1.0)
        }
        PenaltyKind::L2 => {
            let lambda = penalty.lambda();
            let (x_b, _, w) = problem.selected_rows();
            let v_t = linalg::gram(problem.target().x());
            let v_b = linalg::weighted_gram(&x_b, &w);
            let q = generalized_eigenvalues(&v_t, &v_b).ok_or(Error::SingularExternalGram)?;
            let n_b = x_b.nrows() as f64;
            let d = x_b.ncols() as f64;
            let tail: f64 = q.iter().map(|qi| qi / (lambda + (1.0 + lambda) * qi)).sum();
            Ok(n_b / (1.0 + lambda) + lambda * d / (1.0 + lambda) + tail)
        }
    }
}

/// Eigenvalues `q` of `A u = q B u` for symmetric `A` and positive definite
/// `B`, via `B = LLᵀ` and the symmetric matrix `L⁻¹AL⁻ᵀ`.
fn generalized_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DVector<f64>> {
    let chol = linalg::cholesky(b)?;
    let l = chol.l();
    let left = l.solve_lower_triangular(a)?;
    let c = l.solve_lower_triangular(&left.transpose())?;
    let c = (&c + c.transpose()) * 0.5;
    Some(c.symmetric_eigenvalues())
}

/// `AIC = m log(RSS/m) + 2 df`, `BIC = m log(RSS/m) + df (log m + 1)` with
/// `m = n_S + n_B* − d` and `RSS = RSS_T + RSS_B*`.
pub fn information_criteria(
    rss_target: f64,
    rss_external: f64,
    df: f64,
    n_target: usize,
    n_selected: usize,
    d: usize,
) -> Result<(f64, f64)> {
    let rss = rss_target + rss_external;
    let m = n_target as f64 + n_selected as f64 - d as f64;
    if !(rss > 0.0 && rss.is_finite()) || m <= 0.0 {
        return Err(Error::DegenerateRss { rss, m });
    }
    let fit_term = m * (rss / m).ln();
    Ok((fit_term + 2.0 * df, fit_term + df * (m.ln() + 1.0)))
}

/// Degrees of freedom, residual sums and both criteria for `(β, γ)`.
pub fn model_criteria(problem: &FusedProblem<'_>, beta: &DVector<f64>, gamma: &DVector<f64>) -> Result<ModelCriteria> {
    let (rss_target, rss_external) = rss_parts(problem, beta, gamma)?;
    let df = df_parts(problem, gamma)?;
    let (aic, bic) = information_criteria(
        rss_target,
        rss_external,
        df,
        problem.target().n_rows(),
        problem.selection().len(),
        problem.n_cols(),
    )?;
    Ok(ModelCriteria { df, rss_target, rss_external, aic, bic })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningRow {
    pub lambda: f64,
    pub converged: bool,
    pub criteria: Option<ModelCriteria>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub rows: Vec<TuningRow>,
    pub chosen_index_aic: Option<usize>,
    pub chosen_index_bic: Option<usize>,
}

impl TuningReport {
    fn from_rows(rows: Vec<TuningRow>) -> Self {
        let chosen_index_aic = argmin(&rows, Criterion::Aic);
        let chosen_index_bic = argmin(&rows, Criterion::Bic);
        Self { rows, chosen_index_aic, chosen_index_bic }
    }

    pub fn chosen(&self, criterion: Criterion) -> Option<usize> {
        match criterion {
            Criterion::Aic => self.chosen_index_aic,
            Criterion::Bic => self.chosen_index_bic,
        }
    }

    pub fn grid(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.lambda).collect()
    }
}

fn criterion_value(c: &ModelCriteria, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Aic => c.aic,
        Criterion::Bic => c.bic,
    }
}

/// Minimum over converged rows with defined criteria; ties go to the larger λ.
fn argmin(rows: &[TuningRow], criterion: Criterion) -> Option<usize> {
    let mut best: Option<(usize, f64, f64)> = None;
    for (i, row) in rows.iter().enumerate() {
        let Some(c) = row.criteria.filter(|_| row.converged) else {
            continue;
        };
        let value = criterion_value(&c, criterion);
        if !value.is_finite() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, v, lam)) => value < v || (value == v && row.lambda > lam),
        };
        if better {
            best = Some((i, value, row.lambda));
        }
    }
    best.map(|(i, _, _)| i)
}

/// Fits every grid value in order, warm-starting the shifts from the
/// previous fit, and returns the fit minimizing the criterion.
pub fn select_lambda(
    problem: &FusedProblem<'_>,
    grid: &[f64],
    criterion: Criterion,
    settings: &SolverSettings,
) -> Result<(FitResult, TuningReport)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let mut fits = Vec::with_capacity(grid.len());
    let mut warm = settings.gamma_init.clone();
    for &lambda in grid {
        let p = problem.with_penalty(problem.penalty().with_lambda(lambda)?);
        let s = SolverSettings { gamma_init: warm.clone(), ..settings.clone() };
        let fit = fit_penalized(&p, &s)?;
        warm = Some(fit.gamma.clone());
        fits.push(fit);
    }
    finish(grid, fits, criterion)
}

/// Cold-start variant fitting grid points concurrently.
pub fn select_lambda_parallel(
    problem: &FusedProblem<'_>,
    grid: &[f64],
    criterion: Criterion,
    settings: &SolverSettings,
) -> Result<(FitResult, TuningReport)> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    let fits = grid
        .par_iter()
        .map(|&lambda| {
            let p = problem.with_penalty(problem.penalty().with_lambda(lambda)?);
            fit_penalized(&p, settings)
        })
        .collect::<Result<Vec<_>>>()?;
    finish(grid, fits, criterion)
}

fn finish(grid: &[f64], mut fits: Vec<FitResult>, criterion: Criterion) -> Result<(FitResult, TuningReport)> {
    let rows = grid
        .iter()
        .zip(&fits)
        .map(|(&lambda, f)| TuningRow { lambda, converged: f.converged, criteria: f.criteria })
        .collect();
    let report = TuningReport::from_rows(rows);
    let chosen = report.chosen(criterion).ok_or(Error::NoConvergedFit)?;
    Ok((fits.swap_remove(chosen), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{assemble_problem, PenaltySpec, RegressionDataset, SubsampleSelection};

    fn row(lambda: f64, aic: f64, converged: bool) -> TuningRow {
        TuningRow {
            lambda,
            converged,
            criteria: Some(ModelCriteria { df: 1.0, rss_target: 1.0, rss_external: 0.0, aic, bic: aic }),
        }
    }

    #[test]
    fn information_criteria_examples() {
        let m = 50usize;
        let (aic, bic) = information_criteria(30.0, 20.0, 2.0, 40, 12, 2).unwrap();
        assert!((aic - 4.0).abs() < 1e-12);
        assert!((bic - 2.0 * ((m as f64).ln() + 1.0)).abs() < 1e-12);

        let (aic, _) = information_criteria(50.0, 0.0, 3.0, 60, 42, 2).unwrap();
        assert!((aic - (100.0 * 0.5f64.ln() + 6.0)).abs() < 1e-12);

        let (a1, _) = information_criteria(7.0, 3.0, 2.0, 10, 10, 3).unwrap();
        let (a2, _) = information_criteria(7.0, 3.0, 5.0, 10, 10, 3).unwrap();
        assert!((a2 - a1 - 6.0).abs() < 1e-12);
    }

    #[test]
    fn information_criteria_degenerate() {
        assert!(matches!(information_criteria(0.0, 0.0, 1.0, 10, 10, 2), Err(Error::DegenerateRss { .. })));
        assert!(matches!(information_criteria(1.0, 0.0, 1.0, 1, 1, 2), Err(Error::DegenerateRss { .. })));
    }

    #[test]
    fn argmin_prefers_larger_lambda_on_ties() {
        let rows = vec![row(8.0, 5.0, true), row(4.0, 3.0, true), row(2.0, 3.0, true), row(1.0, 9.0, true)];
        assert_eq!(argmin(&rows, Criterion::Aic), Some(1));
        // order independent: ascending grid still picks the larger λ
        let rev: Vec<_> = rows.into_iter().rev().collect();
        assert_eq!(argmin(&rev, Criterion::Aic), Some(2));
    }

    #[test]
    fn argmin_skips_unconverged() {
        let rows = vec![row(8.0, 5.0, true), row(4.0, 1.0, false)];
        assert_eq!(argmin(&rows, Criterion::Aic), Some(0));
        let rows = vec![row(4.0, 1.0, false)];
        assert_eq!(argmin(&rows, Criterion::Aic), None);
    }

    #[test]
    fn l1_df_counts_nonzero_shifts() {
        let target = RegressionDataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0]], &[0.0, 1.0, 2.0]).unwrap();
        let ext = RegressionDataset::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]], &[0.0; 4]).unwrap();
        let sel = SubsampleSelection::full(4);
        let p = assemble_problem(&target, &ext, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        let gamma = DVector::from_vec(vec![0.0, 1.2, 0.0, -3.0]);
        assert_eq!(df_parts(&p, &gamma).unwrap(), 3.0);
    }

    #[test]
    fn l2_df_scalar_case() {
        // V_T = a = 5, V_B = b = 2, λ = 1, two external rows
        let target = RegressionDataset::from_rows(&[vec![1.0], vec![2.0]], &[0.0, 1.0]).unwrap();
        let ext = RegressionDataset::from_rows(&[vec![1.0], vec![1.0]], &[0.0, 1.0]).unwrap();
        let sel = SubsampleSelection::full(2);
        let p = assemble_problem(&target, &ext, &sel, PenaltySpec::l2(1.0).unwrap()).unwrap();
        let q = 5.0 / 2.0;
        let expected = 2.0 / 2.0 + 0.5 + q / (1.0 + 2.0 * q);
        assert!((df_parts(&p, &DVector::zeros(2)).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn l2_df_requires_external_rank() {
        let target = RegressionDataset::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]], &[0.0, 1.0, 2.0])
            .unwrap();
        let ext = RegressionDataset::from_rows(&[vec![1.0, 1.0]], &[0.0]).unwrap();
        let sel = SubsampleSelection::full(1);
        let p = assemble_problem(&target, &ext, &sel, PenaltySpec::l2(1.0).unwrap()).unwrap();
        assert_eq!(df_parts(&p, &DVector::zeros(1)), Err(Error::SingularExternalGram));
    }

    #[test]
    fn rss_external_zero_in_column_space() {
        let target = RegressionDataset::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0]], &[1.0, 3.0, 5.0])
            .unwrap();
        let ext = RegressionDataset::from_rows(
            &[vec![1.0, 0.5], vec![1.0, -1.0], vec![1.0, 3.0], vec![1.0, 2.0]],
            &[4.0, -2.0, 7.0, 1.0],
        )
        .unwrap();
        let sel = SubsampleSelection::full(4);
        let p = assemble_problem(&target, &ext, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        // γ = y_B − X_B b
        let b = DVector::from_vec(vec![0.3, -0.7]);
        let gamma = ext.y() - ext.x() * &b;
        // perfect target fit: y_T = 1 + 2x
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let (rss_t, rss_b) = rss_parts(&p, &beta, &gamma).unwrap();
        assert!(rss_t < 1e-24);
        assert!(rss_b < 1e-20);
    }
}
