//! Synthetic target and external data.
//!
//! Draw order inside one call is fixed: covariates row by row, then the
//! noise, then the contamination. Changing it changes every seeded result.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::RegressionDataset;
use crate::error::{Error, Result};
use crate::linalg;
use crate::sampling::leverage_norms;

/// Contamination pattern of the external sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    /// A random fraction of rows shifted by `offset + Gamma(shape, scale)`.
    #[serde(rename = "SP")]
    Sparse,
    /// Every row shifted by `|t₂|`.
    #[serde(rename = "HT")]
    HeavyTailed,
    /// Shifts proportional to the row leverage.
    #[serde(rename = "HL")]
    HighLeverage,
}

impl Case {
    pub fn label(self) -> &'static str {
        match self {
            Case::Sparse => "SP",
            Case::HeavyTailed => "HT",
            Case::HighLeverage => "HL",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SP" => Ok(Case::Sparse),
            "HT" => Ok(Case::HeavyTailed),
            "HL" => Ok(Case::HighLeverage),
            _ => Err(Error::InvalidArgument(format!("unknown case `{s}` (expected SP, HT or HL)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateTail {
    Normal,
    T3,
}

impl CovariateTail {
    pub fn label(self) -> &'static str {
        match self {
            CovariateTail::Normal => "normal",
            CovariateTail::T3 => "t3",
        }
    }
}

impl fmt::Display for CovariateTail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for CovariateTail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(CovariateTail::Normal),
            "t3" => Ok(CovariateTail::T3),
            _ => Err(Error::InvalidArgument(format!("unknown covariate tail `{s}` (expected normal or t3)"))),
        }
    }
}

/// Scale matrix of the covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Covariance {
    /// `Σ_ij = ρ^|i−j|`
    Ar1 { rho: f64 },
    /// `Σ = v·I`
    Independent { variance: f64 },
}

impl Covariance {
    pub fn matrix(&self, dim: usize) -> DMatrix<f64> {
        match *self {
            Covariance::Ar1 { rho } => ar1_covariance(dim, rho),
            Covariance::Independent { variance } => DMatrix::identity(dim, dim) * variance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_target: usize,
    pub n_external: usize,
    /// Covariates excluding the intercept column.
    pub d_covariates: usize,
    pub covariate_tail: CovariateTail,
    pub case: Case,
    pub sp_fraction: f64,
    /// μ₀
    pub intercept: f64,
    /// θ₀, one entry per covariate
    pub coef: Vec<f64>,
    pub noise_sd: f64,
    pub bias_offset: f64,
    pub bias_shape: f64,
    pub bias_scale: f64,
    pub covariance: Covariance,
    pub include_intercept: bool,
    pub master_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_target: 150,
            n_external: 20_000,
            d_covariates: 100,
            covariate_tail: CovariateTail::Normal,
            case: Case::Sparse,
            sp_fraction: 0.7,
            intercept: 1.0,
            coef: vec![1.0; 100],
            noise_sd: 1.0,
            bias_offset: 2.0,
            bias_shape: 1.0,
            bias_scale: 1.0,
            covariance: Covariance::Ar1 { rho: 0.5 },
            include_intercept: true,
            master_seed: 0,
        }
    }
}

impl ScenarioConfig {
    /// Columns of the generated design, intercept included.
    pub fn n_cols(&self) -> usize {
        self.d_covariates + usize::from(self.include_intercept)
    }

    /// `β₀ = (μ₀, θ₀)`, or `θ₀` without an intercept column.
    pub fn beta_true(&self) -> DVector<f64> {
        let head = self.include_intercept.then_some(self.intercept);
        DVector::from_iterator(self.n_cols(), head.into_iter().chain(self.coef.iter().copied()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_target == 0 || self.n_external == 0 || self.d_covariates == 0 {
            return bad("sample sizes and covariate count must be positive".into());
        }
        if self.coef.len() != self.d_covariates {
            return bad(format!("{} coefficients for {} covariates", self.coef.len(), self.d_covariates));
        }
        if !(0.0..=1.0).contains(&self.sp_fraction) {
            return bad(format!("sp_fraction {} outside [0, 1]", self.sp_fraction));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad(format!("noise_sd {} must be finite and nonnegative", self.noise_sd));
        }
        if !(self.bias_shape > 0.0 && self.bias_scale > 0.0 && self.bias_shape.is_finite() && self.bias_scale.is_finite())
        {
            return bad("bias shape and scale must be positive".into());
        }
        if !self.bias_offset.is_finite() || !self.intercept.is_finite() || self.coef.iter().any(|c| !c.is_finite()) {
            return bad("coefficients and bias offset must be finite".into());
        }
        match self.covariance {
            Covariance::Ar1 { rho } if !(rho > -1.0 && rho < 1.0) => {
                return bad(format!("AR(1) correlation {rho} outside (-1, 1)"))
            }
            Covariance::Independent { variance } if !(variance > 0.0 && variance.is_finite()) => {
                return bad(format!("covariate variance {variance} must be positive"))
            }
            _ => {}
        }
        if self.case == Case::HighLeverage && self.n_cols() < 2 {
            return bad("HL case needs at least two design columns".into());
        }
        Ok(())
    }
}

/// Toeplitz matrix `Σ_ij = ρ^|i−j|`.
pub fn ar1_covariance(dim: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Design matrix with a leading ones column (when configured) and covariates
/// `N(0, Σ)` or multivariate t₃ with scale `Σ`.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, config: &ScenarioConfig, rng: &mut R) -> Result<DMatrix<f64>> {
    let d = config.d_covariates;
    let sigma = config.covariance.matrix(d);
    let factor = linalg::cholesky(&sigma)
        .ok_or_else(|| Error::InvalidArgument("covariate covariance is not positive definite".into()))?
        .l();
    let chi = ChiSquared::new(3.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let offset = usize::from(config.include_intercept);
    let mut x = DMatrix::zeros(n, d + offset);
    let mut z = DVector::zeros(d);
    for i in 0..n {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let mut g = &factor * &z;
        if config.covariate_tail == CovariateTail::T3 {
            let w: f64 = chi.sample(rng);
            g /= (w / 3.0).sqrt();
        }
        if offset == 1 {
            x[(i, 0)] = 1.0;
        }
        for j in 0..d {
            x[(i, j + offset)] = g[j];
        }
    }
    Ok(x)
}

fn noisy_response<R: Rng + ?Sized>(x: &DMatrix<f64>, config: &ScenarioConfig, rng: &mut R) -> DVector<f64> {
    let mut y = x * config.beta_true();
    for v in y.iter_mut() {
        let e: f64 = rng.sample(StandardNormal);
        *v += config.noise_sd * e;
    }
    y
}

/// `y = Xβ₀ + σε` with `n_target` rows.
pub fn gen_target<R: Rng + ?Sized>(config: &ScenarioConfig, rng: &mut R) -> Result<RegressionDataset> {
    config.validate()?;
    let x = gen_covariates(config.n_target, config, rng)?;
    let y = noisy_response(&x, config, rng);
    RegressionDataset::new(x, y)
}

/// `y = Xβ₀ + γ + σε` with `n_external` rows; also returns the true shifts.
pub fn gen_external<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<(RegressionDataset, DVector<f64>)> {
    config.validate()?;
    let n = config.n_external;
    let x = gen_covariates(n, config, rng)?;
    let mut y = noisy_response(&x, config, rng);
    let gamma = match config.case {
        Case::Sparse => {
            let bias = Gamma::new(config.bias_shape, config.bias_scale).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            DVector::from_fn(n, |_, _| {
                let hit = rng.random::<f64>() < config.sp_fraction;
                if hit {
                    config.bias_offset + bias.sample(rng)
                } else {
                    0.0
                }
            })
        }
        Case::HeavyTailed => {
            let chi = ChiSquared::new(2.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            DVector::from_fn(n, |_, _| {
                let g: f64 = rng.sample(StandardNormal);
                let w: f64 = chi.sample(rng);
                (g / (w / 2.0).sqrt()).abs()
            })
        }
        Case::HighLeverage => {
            let d = x.ncols() as f64;
            let c = n as f64 / (d - 1.0);
            let t = leverage_norms(&x)?;
            let xi = Gamma::new(1.0, 1.0).map_err(|e| Error::InvalidArgument(e.to_string()))?;
            DVector::from_fn(n, |i, _| c * xi.sample(rng) * t[i] * t[i])
        }
    };
    y += &gamma;
    Ok((RegressionDataset::new(x, y)?, gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::fit_ols;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn small(case: Case) -> ScenarioConfig {
        ScenarioConfig {
            n_target: 50,
            n_external: 400,
            d_covariates: 3,
            coef: vec![1.0; 3],
            case,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn ar1_examples() {
        assert_eq!(ar1_covariance(1, 0.5), DMatrix::from_element(1, 1, 1.0));
        let m = ar1_covariance(3, 0.5);
        assert_eq!(m, DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]));
        for dim in [2, 50, 200] {
            let eig = ar1_covariance(dim, 0.5).symmetric_eigenvalues();
            assert!(eig.min() > 0.0);
        }
    }

    #[test]
    fn normal_covariates_match_covariance() {
        let cfg = ScenarioConfig { d_covariates: 2, coef: vec![1.0; 2], ..ScenarioConfig::default() };
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let n = 100_000;
        let x = gen_covariates(n, &cfg, &mut rng).unwrap();
        assert!(x.column(0).iter().all(|v| *v == 1.0));
        let z = x.columns(1, 2).into_owned();
        let mean = z.row_mean();
        let centered = DMatrix::from_fn(n, 2, |i, j| z[(i, j)] - mean[j]);
        let cov = centered.tr_mul(&centered) / (n as f64 - 1.0);
        let sigma = ar1_covariance(2, 0.5);
        assert!((cov - sigma).abs().max() < 0.02);
    }

    #[test]
    fn t3_covariates_are_heavy_tailed() {
        let cfg = ScenarioConfig {
            d_covariates: 2,
            coef: vec![1.0; 2],
            covariate_tail: CovariateTail::T3,
            ..ScenarioConfig::default()
        };
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let x = gen_covariates(50_000, &cfg, &mut rng).unwrap();
        for j in 1..3 {
            let col = x.column(j);
            let m = col.mean();
            let m2 = col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / col.len() as f64;
            let m4 = col.iter().map(|v| (v - m).powi(4)).sum::<f64>() / col.len() as f64;
            assert!(m4 / (m2 * m2) > 3.0);
        }
    }

    #[test]
    fn noiseless_target_is_exact() {
        let cfg = ScenarioConfig { noise_sd: 0.0, ..small(Case::Sparse) };
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let data = gen_target(&cfg, &mut rng).unwrap();
        let fitted = data.x() * cfg.beta_true();
        assert!((fitted - data.y()).amax() == 0.0);
    }

    #[test]
    fn ols_recovers_coefficients() {
        let cfg = ScenarioConfig { n_target: 10_000, d_covariates: 2, coef: vec![1.0; 2], ..ScenarioConfig::default() };
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let data = gen_target(&cfg, &mut rng).unwrap();
        let beta = fit_ols(&data).unwrap();
        assert!((beta - cfg.beta_true()).amax() < 0.05);
        let resid = data.y() - data.x() * cfg.beta_true();
        let var = resid.norm_squared() / resid.len() as f64;
        assert!((var - 1.0).abs() < 0.05);
    }

    #[test]
    fn sp_without_fraction_is_clean() {
        let cfg = ScenarioConfig { sp_fraction: 0.0, ..small(Case::Sparse) };
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let (_, gamma) = gen_external(&cfg, &mut rng).unwrap();
        assert!(gamma.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn sp_fraction_and_mean() {
        let cfg = ScenarioConfig { n_external: 20_000, ..small(Case::Sparse) };
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (_, gamma) = gen_external(&cfg, &mut rng).unwrap();
        let shifted: Vec<f64> = gamma.iter().copied().filter(|g| *g != 0.0).collect();
        let frac = shifted.len() as f64 / 20_000.0;
        assert!((frac - 0.7).abs() < 0.01, "fraction {frac}");
        let mean = shifted.iter().sum::<f64>() / shifted.len() as f64;
        assert!((mean - 3.0).abs() < 0.05, "mean {mean}");
        assert!(shifted.iter().all(|g| *g > 2.0));
    }

    #[test]
    fn sp_indicator_passes_chi_square() {
        // 1e-6 upper quantile of chi-square with one degree of freedom
        let critical = 23.93;
        for seed in 0..20 {
            let cfg = ScenarioConfig { n_external: 20_000, ..small(Case::Sparse) };
            let mut rng = ChaCha20Rng::seed_from_u64(100 + seed);
            let (_, gamma) = gen_external(&cfg, &mut rng).unwrap();
            let hits = gamma.iter().filter(|g| **g != 0.0).count() as f64;
            let n = 20_000.0;
            let (e1, e0) = (0.7 * n, 0.3 * n);
            let stat = (hits - e1).powi(2) / e1 + (n - hits - e0).powi(2) / e0;
            assert!(stat < critical, "seed {seed}: {stat}");
        }
    }

    #[test]
    fn ht_shifts_are_positive_and_heavy() {
        let cfg = ScenarioConfig { n_external: 20_000, ..small(Case::HeavyTailed) };
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (_, gamma) = gen_external(&cfg, &mut rng).unwrap();
        assert!(gamma.iter().all(|g| *g >= 0.0));
        // t₂ has no variance; the maximum of 20000 draws is far above a normal's
        assert!(gamma.max() > 20.0);
    }

    #[test]
    fn hl_mean_shift_matches_trace_identity() {
        let cfg = ScenarioConfig { n_external: 20_000, ..small(Case::HighLeverage) };
        let mut means = 0.0;
        for seed in 0..10 {
            let mut rng = ChaCha20Rng::seed_from_u64(6 + seed);
            let (_, gamma) = gen_external(&cfg, &mut rng).unwrap();
            means += gamma.mean();
        }
        let d = cfg.n_cols() as f64;
        assert!((means / 10.0 - d / (d - 1.0)).abs() < 0.03);
    }

    #[test]
    fn generation_is_reproducible() {
        let cfg = small(Case::HighLeverage);
        let a = gen_external(&cfg, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        let b = gen_external(&cfg, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        assert!(ScenarioConfig::default().validate().is_ok());
        let bad = ScenarioConfig { sp_fraction: 1.5, ..ScenarioConfig::default() };
        assert!(bad.validate().is_err());
        let bad = ScenarioConfig { coef: vec![1.0; 3], ..ScenarioConfig::default() };
        assert!(bad.validate().is_err());
    }
}
