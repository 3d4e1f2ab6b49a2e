//! The replication engine.
//!
//! Replication `k` draws everything from `ChaCha20Rng::seed_from_u64(seed)`
//! switched to stream `k`: first the target sample, then the external
//! sample, then the random subsamples in (rate, estimator) order. Results are
//! folded in replication order, so the worker count never changes the output.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::data::{assemble_problem, FitResult, PenaltySpec, RegressionDataset, SubsampleSelection};
use crate::error::{Error, Result};
use crate::estimator::{combine_estimators, fit_ols, fit_penalized, kkt_holds, selection_gram, SolverSettings};
use crate::io::format_float;
use crate::linalg;
use crate::sampling::{
    combined_select, leverage_norms, osmac_from_norms, poisson_sample, target_guided_select, uniform_probabilities,
    water_fill, SamplingProbabilities,
};
use crate::tuning::{lambda_grid_with_ratio, select_lambda};

use super::metrics::{evaluate_estimates, MetricsSummary};
use super::scenario::{gen_external, gen_target, Case, CovariateTail, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// OLS on the target sample alone.
    Target,
    /// Fusion with every external row.
    Full,
    /// Fusion with a uniform Poisson subsample.
    Uniform,
    /// Fusion with a leverage-optimal Poisson subsample.
    Leverage,
    /// Fusion with the rows closest to the target fit.
    TargetGuided,
    /// Fusion with the union of a target-guided and a leverage subsample.
    DataCombined,
    /// Precision-weighted average of the leverage and target-guided fits.
    EstimatorCombined,
    /// Fusion with a residual-driven (OSMAC) Poisson subsample.
    Osmac,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 8] = [
        EstimatorKind::Target,
        EstimatorKind::Full,
        EstimatorKind::Uniform,
        EstimatorKind::Leverage,
        EstimatorKind::TargetGuided,
        EstimatorKind::DataCombined,
        EstimatorKind::EstimatorCombined,
        EstimatorKind::Osmac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Target => "target",
            EstimatorKind::Full => "full",
            EstimatorKind::Uniform => "uniform",
            EstimatorKind::Leverage => "leverage",
            EstimatorKind::TargetGuided => "target_guided",
            EstimatorKind::DataCombined => "data_combined",
            EstimatorKind::EstimatorCombined => "estimator_combined",
            EstimatorKind::Osmac => "osmac",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator `{s}`")))
    }
}

/// Coefficients the OSMAC scores are computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OsmacPilot {
    /// OLS on the target sample.
    Target,
    /// The generating coefficients, i.e. the idealised OSMAC scores.
    True,
}

impl FromStr for OsmacPilot {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(OsmacPilot::Target),
            "true" => Ok(OsmacPilot::True),
            _ => Err(Error::InvalidArgument(format!("unknown OSMAC pilot `{s}` (expected target or true)"))),
        }
    }
}

/// The generator for replication `k`.
pub fn replication_rng(master_seed: u64, k: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(k);
    rng
}

/// Target sample, external sample and true shifts of replication `k`, plus
/// the generator positioned after the data draws.
pub fn generate_replication(
    scenario: &ScenarioConfig,
    k: u64,
) -> Result<(RegressionDataset, RegressionDataset, DVector<f64>, ChaCha20Rng)> {
    let mut rng = replication_rng(scenario.master_seed, k);
    let target = gen_target(scenario, &mut rng)?;
    let (external, gamma) = gen_external(scenario, &mut rng)?;
    Ok((target, external, gamma, rng))
}

/// One estimator at one rate in one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub beta: DVector<f64>,
    /// Share of selected external rows with a nonzero true shift.
    pub contaminated_fraction: Option<f64>,
    pub kkt_checked: usize,
    pub kkt_violations: usize,
}

/// Aggregate over replications for one (estimator, rate) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub case: Case,
    pub covariate_tail: CovariateTail,
    pub estimator: EstimatorKind,
    pub rate: f64,
    pub k_effective: usize,
    pub failures: usize,
    pub metrics: Option<MetricsSummary>,
    /// `‖β̂_k − β₀‖²` per replication, `None` where the fit failed.
    pub squared_errors: Vec<Option<f64>>,
    pub contaminated_fraction: Option<f64>,
    pub kkt_checked: usize,
    pub kkt_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
}

pub const RESULTS_HEADER: &str = "case,covariate_tail,estimator,rate,K_effective,emse,ebias2,evar,failures";

impl ExperimentResults {
    pub fn row(&self, estimator: EstimatorKind, rate: f64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.rate == rate)
    }

    /// One line per (estimator, rate); metrics are `NaN` when every
    /// replication failed.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{RESULTS_HEADER}")?;
        for row in &self.rows {
            let m = row.metrics.unwrap_or(MetricsSummary { emse: f64::NAN, ebias2: f64::NAN, evar: f64::NAN });
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                row.case,
                row.covariate_tail,
                row.estimator,
                format_float(row.rate),
                row.k_effective,
                format_float(m.emse),
                format_float(m.ebias2),
                format_float(m.evar),
                row.failures
            )?;
        }
        Ok(())
    }
}

/// Runs every replication and aggregates per (estimator, rate).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let k = cfg.replications;
    let per_rep: Vec<Vec<Option<CellOutcome>>> = if cfg.workers <= 1 {
        (0..k).map(|i| run_replication(cfg, i as u64)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..k).into_par_iter().map(|i| run_replication(cfg, i as u64)).collect())
    };
    let beta_true = cfg.scenario.beta_true();
    let n_rates = cfg.rates.len();
    let mut rows = Vec::with_capacity(cfg.estimators.len() * n_rates);
    for (ei, &estimator) in cfg.estimators.iter().enumerate() {
        for (ri, &rate) in cfg.rates.iter().enumerate() {
            let cell = ei * n_rates + ri;
            let outcomes: Vec<Option<&CellOutcome>> = per_rep.iter().map(|rep| rep[cell].as_ref()).collect();
            let betas: Vec<DVector<f64>> = outcomes.iter().flatten().map(|o| o.beta.clone()).collect();
            let metrics = if betas.is_empty() { None } else { Some(evaluate_estimates(&betas, &beta_true, cfg.trim_alpha)?) };
            let fractions: Vec<f64> = outcomes.iter().flatten().filter_map(|o| o.contaminated_fraction).collect();
            rows.push(ResultRow {
                case: cfg.scenario.case,
                covariate_tail: cfg.scenario.covariate_tail,
                estimator,
                rate,
                k_effective: betas.len(),
                failures: k - betas.len(),
                metrics,
                squared_errors: outcomes.iter().map(|o| o.map(|o| (&o.beta - &beta_true).norm_squared())).collect(),
                contaminated_fraction: (!fractions.is_empty())
                    .then(|| fractions.iter().sum::<f64>() / fractions.len() as f64),
                kkt_checked: outcomes.iter().flatten().map(|o| o.kkt_checked).sum(),
                kkt_violations: outcomes.iter().flatten().map(|o| o.kkt_violations).sum(),
            });
        }
    }
    Ok(ExperimentResults { rows })
}

/// Cells in estimator-major, rate-minor order. A failed data draw fails
/// every cell.
fn run_replication(cfg: &ExperimentConfig, k: u64) -> Vec<Option<CellOutcome>> {
    let n_cells = cfg.estimators.len() * cfg.rates.len();
    let Ok((target, external, gamma, mut rng)) = generate_replication(&cfg.scenario, k) else {
        return vec![None; n_cells];
    };
    let ctx = Replication::new(cfg, &target, &external, &gamma);
    let mut cells = vec![None; n_cells];
    // rate-independent estimators are fit once and shared across rates
    let shared_target = ctx.target_only().ok();
    let shared_full = cfg.estimators.contains(&EstimatorKind::Full).then(|| ctx.full().ok()).flatten();
    for (ri, &rate) in cfg.rates.iter().enumerate() {
        for (ei, &estimator) in cfg.estimators.iter().enumerate() {
            let outcome = match estimator {
                EstimatorKind::Target => shared_target.clone(),
                EstimatorKind::Full => shared_full.clone(),
                _ => ctx.subsampled(estimator, rate, &mut rng).ok(),
            };
            cells[ei * cfg.rates.len() + ri] = outcome;
        }
    }
    cells
}

struct Replication<'a> {
    cfg: &'a ExperimentConfig,
    target: &'a RegressionDataset,
    external: &'a RegressionDataset,
    gamma_true: &'a DVector<f64>,
    beta_target: Result<DVector<f64>>,
    norms: Result<Vec<f64>>,
    settings: SolverSettings,
}

impl<'a> Replication<'a> {
    fn new(
        cfg: &'a ExperimentConfig,
        target: &'a RegressionDataset,
        external: &'a RegressionDataset,
        gamma_true: &'a DVector<f64>,
    ) -> Self {
        Self {
            cfg,
            target,
            external,
            gamma_true,
            beta_target: fit_ols(target),
            norms: leverage_norms(external.x()),
            settings: SolverSettings { tol: cfg.tol, max_iter: cfg.max_iter, gamma_init: None },
        }
    }

    fn beta_target(&self) -> Result<&DVector<f64>> {
        self.beta_target.as_ref().map_err(Clone::clone)
    }

    fn norms(&self) -> Result<&[f64]> {
        self.norms.as_deref().map_err(Clone::clone)
    }

    fn contamination(&self, selections: &[&SubsampleSelection]) -> Option<f64> {
        let total: usize = selections.iter().map(|s| s.len()).sum();
        let hit: usize = selections
            .iter()
            .flat_map(|s| s.indices())
            .filter(|&&i| self.gamma_true[i] != 0.0)
            .count();
        (total > 0).then(|| hit as f64 / total as f64)
    }

    /// Fit at the configured λ, or at the λ the criterion picks from the grid.
    /// The returned fit is converged; the flag reports the KKT check.
    fn tuned(&self, selection: &SubsampleSelection) -> Result<(FitResult, bool)> {
        let penalty = PenaltySpec::new(self.cfg.penalty, self.cfg.fixed_lambda.unwrap_or(1.0))?;
        let problem = assemble_problem(self.target, self.external, selection, penalty)?;
        let fit = if self.cfg.fixed_lambda.is_some() {
            let fit = fit_penalized(&problem, &self.settings)?;
            if !fit.converged {
                return Err(Error::NoConvergedFit);
            }
            fit
        } else {
            let grid = lambda_grid_with_ratio(&problem, self.cfg.grid_size, self.cfg.grid_ratio)?;
            select_lambda(&problem, &grid, self.cfg.criterion, &self.settings)?.0
        };
        let kkt_ok = kkt_holds(&problem.with_penalty(fit.penalty), &fit, self.cfg.tol);
        Ok((fit, kkt_ok))
    }

    fn fused(&self, selections: &[&SubsampleSelection], fit: (FitResult, bool)) -> CellOutcome {
        CellOutcome {
            beta: fit.0.beta,
            contaminated_fraction: self.contamination(selections),
            kkt_checked: 1,
            kkt_violations: usize::from(!fit.1),
        }
    }

    fn target_only(&self) -> Result<CellOutcome> {
        Ok(CellOutcome {
            beta: self.beta_target()?.clone(),
            contaminated_fraction: None,
            kkt_checked: 0,
            kkt_violations: 0,
        })
    }

    fn full(&self) -> Result<CellOutcome> {
        let selection = SubsampleSelection::full(self.external.n_rows());
        let fit = self.tuned(&selection)?;
        Ok(self.fused(&[&selection], fit))
    }

    fn leverage_probs(&self, r: f64) -> Result<SamplingProbabilities> {
        SamplingProbabilities::new(water_fill(self.norms()?, r)?, r)
    }

    fn subsampled(&self, estimator: EstimatorKind, rate: f64, rng: &mut ChaCha20Rng) -> Result<CellOutcome> {
        let n = self.external.n_rows();
        let r = rate * n as f64;
        let r_total = ((r.round() as usize).max(1)).min(n);
        let c = self.cfg.combined_fraction;
        match estimator {
            EstimatorKind::Target | EstimatorKind::Full => unreachable!("shared across rates"),
            EstimatorKind::Uniform => {
                let selection = poisson_sample(&uniform_probabilities(n, r)?, rng);
                let fit = self.tuned(&selection)?;
                Ok(self.fused(&[&selection], fit))
            }
            EstimatorKind::Leverage => {
                let selection = poisson_sample(&self.leverage_probs(r)?, rng);
                let fit = self.tuned(&selection)?;
                Ok(self.fused(&[&selection], fit))
            }
            EstimatorKind::Osmac => {
                let resid = match self.cfg.osmac_pilot {
                    OsmacPilot::Target => self.external.y() - self.external.x() * self.beta_target()?,
                    OsmacPilot::True => self.external.y() - self.external.x() * self.cfg.scenario.beta_true(),
                };
                let probs = osmac_from_norms(self.norms()?, &resid, r)?.probs;
                let selection = poisson_sample(&probs, rng);
                let fit = self.tuned(&selection)?;
                Ok(self.fused(&[&selection], fit))
            }
            EstimatorKind::TargetGuided => {
                let selection = target_guided_select(self.external, self.beta_target()?, r_total)?;
                let fit = self.tuned(&selection)?;
                Ok(self.fused(&[&selection], fit))
            }
            EstimatorKind::DataCombined => {
                let beta_t = self.beta_target()?;
                let random_part = (1.0 - c) * r_total as f64;
                let selection = if random_part <= 0.0 {
                    target_guided_select(self.external, beta_t, r_total)?
                } else {
                    let probs = self.leverage_probs(random_part)?;
                    combined_select(self.external, beta_t, &probs, r_total, c, rng)?
                };
                let fit = self.tuned(&selection)?;
                Ok(self.fused(&[&selection], fit))
            }
            EstimatorKind::EstimatorCombined => self.estimator_combined(r_total, c, rng),
        }
    }

    fn estimator_combined(&self, r_total: usize, c: f64, rng: &mut ChaCha20Rng) -> Result<CellOutcome> {
        let beta_t = self.beta_target()?;
        let random_part = (1.0 - c) * r_total as f64;
        let tg_size = (c * r_total as f64 - 1e-9).ceil().max(0.0) as usize;
        if tg_size == 0 {
            let selection = poisson_sample(&self.leverage_probs(random_part)?, rng);
            let fit = self.tuned(&selection)?;
            return Ok(self.fused(&[&selection], fit));
        }
        let tg_sel = target_guided_select(self.external, beta_t, tg_size)?;
        if random_part <= 0.0 {
            let fit = self.tuned(&tg_sel)?;
            return Ok(self.fused(&[&tg_sel], fit));
        }
        let rs_sel = poisson_sample(&self.leverage_probs(random_part)?, rng);
        let (fit_rs, ok_rs) = self.tuned(&rs_sel)?;
        let (fit_tg, ok_tg) = self.tuned(&tg_sel)?;
        let v_t = linalg::gram(self.target.x());
        let v_rs = selection_gram(self.external, &rs_sel);
        let v_tg = selection_gram(self.external, &tg_sel);
        let beta = combine_estimators(&fit_rs, &fit_tg, &v_t, &v_rs, &v_tg)?;
        Ok(CellOutcome {
            beta,
            contaminated_fraction: self.contamination(&[&rs_sel, &tg_sel]),
            kkt_checked: 2,
            kkt_violations: usize::from(!ok_rs) + usize::from(!ok_tg),
        })
    }
}
