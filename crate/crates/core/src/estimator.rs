//! Fused penalized estimators.
//!
//! The fused objective over coefficients `β` and per-row mean shifts `γ` is
//!
//! ```text
//! Σ_t (y_t − x_tᵀβ)² + Σ_e w_e (y_e − x_eᵀβ − γ_e)² + λ Σ_e w_e P(γ_e)
//! ```
//!
//! For fixed `γ` the minimizing `β` is a weighted least-squares solve with the
//! fused normal matrix `V = X_TᵀX_T + X_BᵀWX_B`; for fixed `β` each `γ_e` is the
//! thresholded residual `Θ(y_e − x_eᵀβ; λ)`. [`FusedSolver`] alternates these two
//! exact block updates, which is the fixed-point map on `γ` whose limit also
//! minimizes the profiled robust loss `Σ_t (y_t − x_tᵀβ)² + Σ_e w_e H(y_e − x_eᵀβ; λ)`.
//!
//! The |B*|×|B*| hat matrix `W^{1/2}X_B V⁻¹X_BᵀW^{1/2}` is never formed: every
//! product with it goes through a cached Cholesky factor of `V`, so one
//! iteration costs `O(|B*|·d + d²)`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::data::{
    assemble_problem, FitResult, FusedProblem, PenaltyKind, PenaltySpec, RegressionDataset, SubsampleSelection,
};
use crate::error::{Error, Result};
use crate::linalg;
use crate::penalty::{huber_h, penalty_value, psi, theta};
use crate::tuning;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverSettings {
    /// Stop once `‖γ^(k+1) − γ^(k)‖∞ < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Starting shifts, one per selected row. Zeros when `None`.
    pub gamma_init: Option<DVector<f64>>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 1000, gamma_init: None }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Ordinary least squares via the Cholesky factor of `XᵀX`.
pub fn fit_ols(data: &RegressionDataset) -> Result<DVector<f64>> {
    let chol = linalg::cholesky(&linalg::gram(data.x())).ok_or(Error::SingularGram)?;
    Ok(chol.solve(&data.x().tr_mul(data.y())))
}

/// Gathered data and cached factorization for the fixed-point iteration.
pub struct FusedSolver {
    x_b: DMatrix<f64>,
    y_b: DVector<f64>,
    w: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `X_Tᵀ y_T`
    xty_t: DVector<f64>,
    penalty: PenaltySpec,
    rss_offset: RssOffset,
    d: usize,
}

/// Pieces of `‖y_T − X_Tβ‖²` kept so the objective can be evaluated without
/// holding on to the target data.
struct RssOffset {
    yty: f64,
    v_t: DMatrix<f64>,
}

impl FusedSolver {
    pub fn new(problem: &FusedProblem<'_>) -> Result<Self> {
        let target = problem.target();
        let (x_b, y_b, w) = problem.selected_rows();
        let v_t = linalg::gram(target.x());
        let v = &v_t + linalg::weighted_gram(&x_b, &w);
        let chol = linalg::cholesky(&v).ok_or(Error::SingularFusedGram)?;
        let xty_t = target.x().tr_mul(target.y());
        let yty = linalg::sq_norm(target.y());
        Ok(Self {
            d: x_b.ncols(),
            x_b,
            y_b,
            w,
            chol,
            xty_t,
            penalty: problem.penalty(),
            rss_offset: RssOffset { yty, v_t },
        })
    }

    pub fn n_selected(&self) -> usize {
        self.y_b.len()
    }

    /// `β(γ) = V⁻¹ X_Tᵀy_T + V⁻¹ X_BᵀW(y_B − γ)`.
    pub fn beta_for(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let weighted = (&self.y_b - gamma).component_mul(&self.w);
        let mut rhs = self.x_b.tr_mul(&weighted);
        rhs += &self.xty_t;
        self.chol.solve(&rhs)
    }

    /// External residuals `y_B − X_Bβ`. Equal to `W^{-1/2} z` in the
    /// hat-matrix form of the update.
    pub fn external_residuals(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut r = self.y_b.clone();
        r.gemv(-1.0, &self.x_b, beta, 1.0);
        r
    }

    /// One fixed-point update `γ ↦ Θ(y_B − X_Bβ(γ); λ)`.
    pub fn step(&self, gamma: &DVector<f64>) -> DVector<f64> {
        let beta = self.beta_for(gamma);
        self.external_residuals(&beta).map(|z| theta(z, self.penalty))
    }

    /// Fused objective at `(β, γ)`.
    pub fn objective(&self, beta: &DVector<f64>, gamma: &DVector<f64>) -> f64 {
        let off = &self.rss_offset;
        let rss_t = off.yty - 2.0 * beta.dot(&self.xty_t) + beta.dot(&(&off.v_t * beta));
        let r = self.external_residuals(beta) - gamma;
        let ext: f64 = r.iter().zip(self.w.iter()).map(|(ri, wi)| wi * ri * ri).sum();
        let pen: f64 = gamma
            .iter()
            .zip(self.w.iter())
            .map(|(g, wi)| wi * penalty_value(*g, self.penalty.kind()))
            .sum();
        rss_t + ext + self.penalty.lambda() * pen
    }

    /// Number of `f64` slots held or allocated per iteration by the solver.
    /// Linear in `|B*|`; no `|B*|²` buffer exists.
    pub fn aux_floats(&self) -> usize {
        let m = self.n_selected();
        let d = self.d;
        // gathered design, response, weights
        let held = m * d + 2 * m;
        // V, its factor, V_T, X_Tᵀy_T
        let dense = 3 * d * d + d;
        // per step: weighted residual, rhs, β, residuals, new γ
        let per_step = m + d + d + m + m;
        held + dense + per_step
    }

    fn solve(&self, settings: &SolverSettings) -> Result<(DVector<f64>, DVector<f64>, usize, bool)> {
        settings.validate()?;
        let m = self.n_selected();
        let mut gamma = match &settings.gamma_init {
            Some(g) if g.len() == m => g.clone(),
            Some(g) => {
                return Err(Error::DimensionMismatch(format!(
                    "initial shifts have length {}, selection has {m} rows",
                    g.len()
                )))
            }
            None => DVector::zeros(m),
        };
        let mut converged = false;
        let mut iterations = 0;
        while iterations < settings.max_iter {
            let next = self.step(&gamma);
            iterations += 1;
            let delta = (&next - &gamma).amax();
            gamma = next;
            if delta < settings.tol {
                converged = true;
                break;
            }
        }
        let beta = self.beta_for(&gamma);
        Ok((beta, gamma, iterations, converged))
    }
}

/// Fixed-point fit of the fused problem for either penalty.
///
/// Non-convergence is reported through `converged = false`, not an error.
pub fn fit_fused(problem: &FusedProblem<'_>, settings: &SolverSettings) -> Result<FitResult> {
    let solver = FusedSolver::new(problem)?;
    let (beta, gamma, iterations, converged) = solver.solve(settings)?;
    let criteria = tuning::model_criteria(problem, &beta, &gamma).ok();
    Ok(FitResult { beta, gamma, iterations, converged, penalty: problem.penalty(), criteria })
}

/// Closed-form ℓ2 fit:
/// `β = (V_T + c V_B)⁻¹(X_Tᵀy_T + c X_BᵀWy_B)` with `c = λ/(1+λ)`, and
/// `γ = (y_B − X_Bβ)/(1+λ)`.
pub fn fit_fused_l2(problem: &FusedProblem<'_>) -> Result<FitResult> {
    let penalty = problem.penalty();
    if penalty.kind() != PenaltyKind::L2 {
        return Err(Error::InvalidArgument("closed-form fit requires the l2 penalty".into()));
    }
    let lambda = penalty.lambda();
    let c = lambda / (1.0 + lambda);
    let target = problem.target();
    let (x_b, y_b, w) = problem.selected_rows();
    let a = linalg::gram(target.x()) + linalg::weighted_gram(&x_b, &w) * c;
    let chol = linalg::cholesky(&a).ok_or(Error::SingularFusedGram)?;
    let rhs = target.x().tr_mul(target.y()) + x_b.tr_mul(&y_b.component_mul(&w)) * c;
    let beta = chol.solve(&rhs);
    let gamma = (&y_b - &x_b * &beta) / (1.0 + lambda);
    let criteria = tuning::model_criteria(problem, &beta, &gamma).ok();
    Ok(FitResult { beta, gamma, iterations: 0, converged: true, penalty, criteria })
}

/// Closed form for ℓ2, fixed-point iteration for ℓ1.
pub fn fit_penalized(problem: &FusedProblem<'_>, settings: &SolverSettings) -> Result<FitResult> {
    match problem.penalty().kind() {
        PenaltyKind::L1 => fit_fused(problem, settings),
        PenaltyKind::L2 => fit_fused_l2(problem),
    }
}

/// Fit on the union of a random and a target-guided subsample. The selection
/// already carries `ρ/π_e` weights on its random part and unit weights on its
/// target-guided part.
pub fn fit_data_combined(
    target: &RegressionDataset,
    external: &RegressionDataset,
    union_selection: &SubsampleSelection,
    penalty: PenaltySpec,
    settings: &SolverSettings,
) -> Result<FitResult> {
    let problem = assemble_problem(target, external, union_selection, penalty)?;
    fit_fused(&problem, settings)
}

/// `(2V_T + V_rs + V_tg)⁻¹ {(V_T + V_rs)β_rs + (V_T + V_tg)β_tg}`.
pub fn combine_estimators(
    fit_rs: &FitResult,
    fit_tg: &FitResult,
    v_t: &DMatrix<f64>,
    v_rs: &DMatrix<f64>,
    v_tg: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let d = v_t.nrows();
    let shapes_ok = [v_t, v_rs, v_tg].iter().all(|m| m.nrows() == d && m.ncols() == d)
        && fit_rs.beta.len() == d
        && fit_tg.beta.len() == d;
    if !shapes_ok {
        return Err(Error::DimensionMismatch("combiner inputs disagree on dimension".into()));
    }
    let total = v_t * 2.0 + v_rs + v_tg;
    let rhs = (v_t + v_rs) * &fit_rs.beta + (v_t + v_tg) * &fit_tg.beta;
    let chol = linalg::cholesky(&total).ok_or(Error::SingularCombiner)?;
    Ok(chol.solve(&rhs))
}

/// `Σ_e w_e x_e x_eᵀ` over a selection.
pub fn selection_gram(external: &RegressionDataset, selection: &SubsampleSelection) -> DMatrix<f64> {
    let (x, _) = external.gather(selection.indices());
    linalg::weighted_gram(&x, &DVector::from_column_slice(selection.weights()))
}

pub fn predict(beta: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients for {} columns",
            beta.len(),
            x.ncols()
        )));
    }
    Ok(x * beta)
}

/// `‖X_Tᵀ(y_T − X_Tβ) + X_BᵀWψ(y_B − X_Bβ; λ)‖∞`, the stationarity residual of
/// the profiled robust loss.
pub fn kkt_residual(problem: &FusedProblem<'_>, beta: &DVector<f64>) -> f64 {
    let target = problem.target();
    let (x_b, y_b, w) = problem.selected_rows();
    let penalty = problem.penalty();
    let grad_t = target.x().tr_mul(&(target.y() - target.x() * beta));
    let scores = (y_b - &x_b * beta).map(|z| psi(z, penalty)).component_mul(&w);
    linalg::inf_norm(&(grad_t + x_b.tr_mul(&scores)))
}

/// Scale used by the KKT gate: `max(1, ‖X_Tᵀy_T‖∞)`.
pub fn kkt_scale(problem: &FusedProblem<'_>) -> f64 {
    let target = problem.target();
    linalg::inf_norm(&target.x().tr_mul(target.y())).max(1.0)
}

/// Whether a converged fit satisfies `kkt_residual ≤ 100·tol·scale`.
pub fn kkt_holds(problem: &FusedProblem<'_>, fit: &FitResult, tol: f64) -> bool {
    kkt_residual(problem, &fit.beta) <= 100.0 * tol * kkt_scale(problem)
}

/// Profiled robust objective `Σ_t (y_t − x_tᵀβ)² + Σ_e w_e H(y_e − x_eᵀβ; λ)`.
pub fn robust_objective(problem: &FusedProblem<'_>, beta: &DVector<f64>) -> f64 {
    let target = problem.target();
    let (x_b, y_b, w) = problem.selected_rows();
    let penalty = problem.penalty();
    let rss_t = linalg::sq_norm(&(target.y() - target.x() * beta));
    let ext: f64 = (y_b - &x_b * beta)
        .iter()
        .zip(w.iter())
        .map(|(z, wi)| wi * huber_h(*z, penalty))
        .sum();
    rss_t + ext
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    fn random_dataset(rng: &mut ChaCha20Rng, n: usize, beta: &[f64], noise: f64) -> RegressionDataset {
        let d = beta.len();
        let x = DMatrix::from_fn(n, d, |_, j| if j == 0 { 1.0 } else { rng.sample(StandardNormal) });
        let b = DVector::from_column_slice(beta);
        let eps = DVector::from_fn(n, |_, _| noise * rng.sample::<f64, _>(StandardNormal));
        let y = &x * b + eps;
        RegressionDataset::new(x, y).unwrap()
    }

    #[test]
    fn ols_noiseless_recovers_coefficients() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = random_dataset(&mut rng, 30, &[1.0, -2.0, 0.5], 0.0);
        let beta = fit_ols(&data).unwrap();
        for (a, b) in beta.iter().zip([1.0, -2.0, 0.5]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn ols_intercept_only_is_mean() {
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 9.0]);
        let data = RegressionDataset::new(x, y).unwrap();
        assert!((fit_ols(&data).unwrap()[0] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn ols_normal_equations_hold() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let data = random_dataset(&mut rng, 50, &[0.3, 1.0, 2.0], 1.0);
        let beta = fit_ols(&data).unwrap();
        let grad = data.x().tr_mul(&(data.y() - data.x() * &beta));
        let scale = linalg::inf_norm(&data.x().tr_mul(data.y()));
        assert!(linalg::inf_norm(&grad) <= 1e-8 * scale);
    }

    #[test]
    fn ols_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let data = RegressionDataset::new(x, DVector::from_element(3, 1.0)).unwrap();
        assert_eq!(fit_ols(&data), Err(Error::SingularGram));
    }

    #[test]
    fn predict_examples() {
        let x = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let y = predict(&DVector::from_vec(vec![1.0, 1.0]), &x).unwrap();
        assert_eq!(y.as_slice(), &[3.0, 7.0]);
        assert_eq!(predict(&DVector::zeros(2), &x).unwrap(), DVector::zeros(2));
        let b = DVector::from_vec(vec![2.0, -1.0, 0.5]);
        assert_eq!(predict(&b, &DMatrix::identity(3, 3)).unwrap(), b);
        assert!(predict(&DVector::zeros(3), &x).is_err());
    }

    #[test]
    fn huge_lambda_kills_all_shifts() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let target = random_dataset(&mut rng, 15, &[1.0, 2.0], 1.0);
        let external = random_dataset(&mut rng, 25, &[1.0, 2.0], 1.0);
        let sel = SubsampleSelection::new((0..25).collect(), vec![1.5; 25], 25.0, 1.0).unwrap();
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l1(1e6).unwrap()).unwrap();
        let fit = fit_fused(&problem, &SolverSettings::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.gamma.iter().all(|g| *g == 0.0));
        // pooled weighted least squares
        let (xb, yb, w) = problem.selected_rows();
        let v = linalg::gram(target.x()) + linalg::weighted_gram(&xb, &w);
        let rhs = target.x().tr_mul(target.y()) + xb.tr_mul(&yb.component_mul(&w));
        let pooled = v.cholesky().unwrap().solve(&rhs);
        assert!((fit.beta - pooled).amax() < 1e-12);
    }

    #[test]
    fn l2_single_external_row_matches_scalar_algebra() {
        // d = 1, target x = (1, 2), y = (1, 3); one external row x = 2, y = 10, w = 1, λ = 1
        let target = RegressionDataset::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 3.0]).unwrap();
        let external = RegressionDataset::from_rows(&[vec![2.0]], &[10.0]).unwrap();
        let sel = SubsampleSelection::full(1);
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l2(1.0).unwrap()).unwrap();
        let fit = fit_fused_l2(&problem).unwrap();
        // c = 1/2: β = (1·1 + 2·3 + 0.5·2·10) / (1 + 4 + 0.5·4) = 17/7
        let beta = 17.0 / 7.0;
        assert!((fit.beta[0] - beta).abs() < 1e-14);
        assert!((fit.gamma[0] - (10.0 - 2.0 * beta) / 2.0).abs() < 1e-14);
    }

    #[test]
    fn l2_huge_lambda_approaches_pooled_fit() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let target = random_dataset(&mut rng, 10, &[1.0, 2.0, -1.0], 1.0);
        let external = random_dataset(&mut rng, 20, &[1.0, 2.0, -1.0], 1.0);
        let sel = SubsampleSelection::full(20);
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l2(1e12).unwrap()).unwrap();
        let fit = fit_fused_l2(&problem).unwrap();
        let (xb, yb, _) = problem.selected_rows();
        let v = linalg::gram(target.x()) + linalg::gram(&xb);
        let pooled = v.cholesky().unwrap().solve(&(target.x().tr_mul(target.y()) + xb.tr_mul(&yb)));
        assert!((&fit.beta - pooled).amax() < 1e-9);
        assert!(fit.gamma.amax() < 1e-9);
    }

    #[test]
    fn l2_closed_form_rejects_l1() {
        let target = RegressionDataset::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 3.0]).unwrap();
        let sel = SubsampleSelection::full(2);
        let problem = assemble_problem(&target, &target, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        assert!(fit_fused_l2(&problem).is_err());
    }

    #[test]
    fn singular_fused_gram() {
        // second column is zero everywhere
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64 + 1.0, 0.0]).collect();
        let data = RegressionDataset::from_rows(&rows, &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let sel = SubsampleSelection::full(4);
        let problem = assemble_problem(&data, &data, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        assert!(matches!(fit_fused(&problem, &SolverSettings::default()), Err(Error::SingularFusedGram)));
    }

    #[test]
    fn not_converged_is_reported() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let target = random_dataset(&mut rng, 6, &[1.0, 2.0], 1.0);
        let mut external = random_dataset(&mut rng, 40, &[1.0, 2.0], 1.0);
        let (x, mut y) = external.clone().into_parts();
        for i in 0..20 {
            y[i] += 8.0;
        }
        external = RegressionDataset::new(x, y).unwrap();
        let sel = SubsampleSelection::full(40);
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l1(0.5).unwrap()).unwrap();
        let settings = SolverSettings { tol: 1e-14, max_iter: 2, gamma_init: None };
        let fit = fit_fused(&problem, &settings).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 2);
    }

    #[test]
    fn gamma_init_length_checked() {
        let target = RegressionDataset::from_rows(&[vec![1.0], vec![2.0]], &[1.0, 3.0]).unwrap();
        let sel = SubsampleSelection::full(2);
        let problem = assemble_problem(&target, &target, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        let settings = SolverSettings { gamma_init: Some(DVector::zeros(3)), ..Default::default() };
        assert!(fit_fused(&problem, &settings).is_err());
        let bad = SolverSettings { tol: 0.0, ..Default::default() };
        assert!(fit_fused(&problem, &bad).is_err());
    }

    #[test]
    fn combine_equal_inputs() {
        let b = DVector::from_vec(vec![1.0, -2.0]);
        let fit = |beta: DVector<f64>| FitResult {
            beta,
            gamma: DVector::zeros(0),
            iterations: 0,
            converged: true,
            penalty: PenaltySpec::l1(1.0).unwrap(),
            criteria: None,
        };
        let v_t = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v_rs = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let v_tg = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 2.0]);
        let out = combine_estimators(&fit(b.clone()), &fit(b.clone()), &v_t, &v_rs, &v_tg).unwrap();
        assert!((out - &b).amax() < 1e-14);

        let zero = DMatrix::zeros(2, 2);
        let b2 = DVector::from_vec(vec![3.0, 0.0]);
        let out = combine_estimators(&fit(b.clone()), &fit(b2.clone()), &v_t, &zero, &zero).unwrap();
        assert!((out - (b + b2) / 2.0).amax() < 1e-14);

        assert_eq!(
            combine_estimators(&fit(DVector::zeros(2)), &fit(DVector::zeros(2)), &zero, &zero, &zero),
            Err(Error::SingularCombiner)
        );
    }

    #[test]
    fn solver_footprint_is_linear() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let d = 100;
        let beta: Vec<f64> = (0..d).map(|j| j as f64 * 0.01).collect();
        let target = random_dataset(&mut rng, 150, &beta, 1.0);
        let external = random_dataset(&mut rng, 5000, &beta, 1.0);
        let sel = SubsampleSelection::full(5000);
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l1(1.0).unwrap()).unwrap();
        let solver = FusedSolver::new(&problem).unwrap();
        let m = 5000;
        let aux = solver.aux_floats();
        assert!(aux <= 2 * (m * d + d * d) + 10 * m);
        assert!(aux < m * m / 10);
        // one step runs without any |B*|² allocation
        let g = solver.step(&DVector::zeros(m));
        assert_eq!(g.len(), m);
    }

    #[test]
    fn fixed_point_objective_is_monotone() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let target = random_dataset(&mut rng, 12, &[1.0, 1.0, -1.0], 1.0);
        let (x, mut y) = random_dataset(&mut rng, 30, &[1.0, 1.0, -1.0], 1.0).into_parts();
        for i in (0..30).step_by(3) {
            y[i] += 2.0 + 3.0 * rng.random::<f64>();
        }
        let external = RegressionDataset::new(x, y).unwrap();
        let weights: Vec<f64> = (0..30).map(|_| 0.5 + 2.0 * rng.random::<f64>()).collect();
        let sel = SubsampleSelection::new((0..30).collect(), weights, 30.0, 1.0).unwrap();
        let problem = assemble_problem(&target, &external, &sel, PenaltySpec::l1(0.7).unwrap()).unwrap();
        let solver = FusedSolver::new(&problem).unwrap();
        let mut gamma = DVector::zeros(30);
        let mut last = solver.objective(&solver.beta_for(&gamma), &gamma);
        for _ in 0..200 {
            gamma = solver.step(&gamma);
            let obj = solver.objective(&solver.beta_for(&gamma), &gamma);
            assert!(obj <= last + 1e-10, "objective rose from {last} to {obj}");
            last = obj;
        }
    }
}
