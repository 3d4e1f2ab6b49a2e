//! Strategies for choosing external rows.
//!
//! * Poisson subsampling with per-row inclusion probabilities and inverse
//!   probability weights `w_e = ρ / π_e`.
//! * Probability constructions: uniform, leverage-optimal (square roots of
//!   leverage scores, capped at one by water-filling) and the residual-driven
//!   OSMAC baseline.
//! * Deterministic target-guided selection of the rows with the smallest
//!   absolute residuals against a target-only fit.
//! * The union of a target-guided and a Poisson subsample.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::{RegressionDataset, SubsampleSelection};
use crate::error::{Error, Result};
use crate::linalg;

/// Inclusion probabilities for Poisson subsampling.
///
/// Entries lie in `[0, 1]` and sum to the nominal size `r`. A zero entry
/// (possible only for a row whose score is exactly zero) is never sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingProbabilities {
    pi: Vec<f64>,
    nominal_size: f64,
}

impl SamplingProbabilities {
    pub fn new(pi: Vec<f64>, nominal_size: f64) -> Result<Self> {
        if pi.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(p) = pi.iter().find(|p| !(p.is_finite() && **p >= 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
        }
        let n = pi.len() as f64;
        if !(nominal_size > 0.0 && nominal_size <= n) {
            return Err(Error::RateOutOfRange { r: nominal_size, n: pi.len() });
        }
        let total: f64 = pi.iter().sum();
        if (total - nominal_size).abs() > 1e-8 * n {
            return Err(Error::InvalidArgument(format!(
                "probabilities sum to {total}, expected {nominal_size}"
            )));
        }
        Ok(Self { pi, nominal_size })
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn nominal_size(&self) -> f64 {
        self.nominal_size
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `ρ = r / n_B`.
    pub fn rate(&self) -> f64 {
        self.nominal_size / self.pi.len() as f64
    }
}

/// The generator used by every seeded command: ChaCha20 keyed by `seed`.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Includes row `e` iff `u_e ≤ π_e` with `u_e ~ U[0, 1)`, one draw per row in
/// row order. Selected rows get weight `ρ / π_e`.
pub fn poisson_sample<R: Rng + ?Sized>(probs: &SamplingProbabilities, rng: &mut R) -> SubsampleSelection {
    let rho = probs.rate();
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    for (e, &p) in probs.pi().iter().enumerate() {
        let u: f64 = rng.random();
        if p > 0.0 && u <= p {
            indices.push(e);
            weights.push(rho / p);
        }
    }
    SubsampleSelection::new(indices, weights, probs.nominal_size(), rho)
        .expect("poisson selection satisfies invariants by construction")
}

pub fn uniform_probabilities(n_external: usize, r: f64) -> Result<SamplingProbabilities> {
    check_size(r, n_external)?;
    let p = r / n_external as f64;
    SamplingProbabilities::new(vec![p; n_external], r)
}

fn check_size(r: f64, n: usize) -> Result<()> {
    if n == 0 || !(r.is_finite() && r > 0.0 && r <= n as f64) {
        return Err(Error::RateOutOfRange { r, n });
    }
    Ok(())
}

/// `t_e = ‖(XᵀX)^{-1/2} x_e‖₂`, the square roots of the leverage scores.
///
/// Uses the Cholesky factor `XᵀX = LLᵀ`, so `t_e = ‖L⁻¹x_e‖₂`.
pub fn leverage_norms(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let chol = linalg::cholesky(&linalg::gram(x)).ok_or(Error::SingularGram)?;
    let l = chol.l();
    let z = l
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::SingularGram)?;
    Ok(z.column_iter().map(|c| c.norm()).collect())
}

/// Probabilities proportional to nonnegative scores, capped at one, summing
/// to `r`.
///
/// Sorts the scores `s_(1) ≤ … ≤ s_(n)` and finds the smallest integer
/// `g ≥ 0` with `(r − g)·s_(n−g) < Σ_{i ≤ n−g} s_(i)`; the `g` largest rows are
/// saturated. The cap is `H = r·Σ_{i ≤ n−g} s_(i) / (r − g)` applied to
/// `r·s_e`, giving `π_e = r·min(r s_e, H) / Σ_i min(r s_i, H)`.
pub fn water_fill(scores: &[f64], r: f64) -> Result<Vec<f64>> {
    let n = scores.len();
    check_size(r, n)?;
    if let Some(s) = scores.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("score {s} is not finite and nonnegative")));
    }
    if r >= n as f64 {
        return Ok(vec![1.0; n]);
    }

    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for s in &sorted {
        prefix.push(prefix.last().unwrap() + s);
    }

    let mut g = 0usize;
    let cap = loop {
        if (g as f64) >= r || g >= n {
            break None;
        }
        let k = n - g;
        let head = prefix[k];
        if (r - g as f64) * sorted[k - 1] < head {
            break Some(r * head / (r - g as f64));
        }
        g += 1;
    };

    let Some(cap) = cap else {
        // fewer positive scores than r: saturate them and spread the rest
        // evenly over the zero-score rows
        let positive = scores.iter().filter(|s| **s > 0.0).count();
        let zeros = n - positive;
        let rest = (r - positive as f64) / zeros as f64;
        return Ok(scores.iter().map(|&s| if s > 0.0 { 1.0 } else { rest }).collect());
    };

    let capped: Vec<f64> = scores.iter().map(|&s| (r * s).min(cap)).collect();
    let total: f64 = capped.iter().sum();
    Ok(capped.iter().map(|c| (r * c / total).min(1.0)).collect())
}

/// Leverage-optimal probabilities `π_e ∝ t_e ∧ H`.
pub fn optimal_probabilities(x: &DMatrix<f64>, r: f64) -> Result<SamplingProbabilities> {
    check_size(r, x.nrows())?;
    let t = leverage_norms(x)?;
    SamplingProbabilities::new(water_fill(&t, r)?, r)
}

/// OSMAC probabilities with a flag set when every score was zero and uniform
/// probabilities were returned instead.
#[derive(Debug, Clone, PartialEq)]
pub struct OsmacProbabilities {
    pub probs: SamplingProbabilities,
    pub scores: Vec<f64>,
    pub uniform_fallback: bool,
}

/// Residual-driven A-optimal baseline: scores `|y_e − x_eᵀβ_pilot|·t_e`,
/// water-filled to sum `r`.
pub fn osmac_probabilities(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    beta_pilot: &DVector<f64>,
    r: f64,
) -> Result<OsmacProbabilities> {
    if beta_pilot.len() != x.ncols() || y.len() != x.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "design {}x{}, response {}, pilot {}",
            x.nrows(),
            x.ncols(),
            y.len(),
            beta_pilot.len()
        )));
    }
    check_size(r, x.nrows())?;
    let t = leverage_norms(x)?;
    let resid = y - x * beta_pilot;
    osmac_from_norms(&t, &resid, r)
}

/// OSMAC probabilities from precomputed leverage norms and pilot residuals.
pub fn osmac_from_norms(norms: &[f64], residuals: &DVector<f64>, r: f64) -> Result<OsmacProbabilities> {
    let n = norms.len();
    if residuals.len() != n {
        return Err(Error::DimensionMismatch(format!("{} residuals for {n} leverage norms", residuals.len())));
    }
    check_size(r, n)?;
    let scores: Vec<f64> = residuals.iter().zip(norms).map(|(r, t)| r.abs() * t).collect();
    if scores.iter().all(|s| *s == 0.0) {
        return Ok(OsmacProbabilities { probs: uniform_probabilities(n, r)?, scores, uniform_fallback: true });
    }
    let probs = SamplingProbabilities::new(water_fill(&scores, r)?, r)?;
    Ok(OsmacProbabilities { probs, scores, uniform_fallback: false })
}

/// Indices of the `r` rows with the smallest `|y_e − x_eᵀβ_T|`, ties going
/// to the lower index. Returned in increasing index order with unit weights.
pub fn target_guided_select(
    external: &RegressionDataset,
    beta_target: &DVector<f64>,
    r: usize,
) -> Result<SubsampleSelection> {
    let n = external.n_rows();
    if r == 0 || r > n {
        return Err(Error::RateOutOfRange { r: r as f64, n });
    }
    if beta_target.len() != external.n_cols() {
        return Err(Error::DimensionMismatch(format!(
            "coefficient length {} for {} columns",
            beta_target.len(),
            external.n_cols()
        )));
    }
    let resid = external.y() - external.x() * beta_target;
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps equal residuals in index order
    order.sort_by(|&a, &b| resid[a].abs().total_cmp(&resid[b].abs()));
    let mut chosen = order[..r].to_vec();
    chosen.sort_unstable();
    SubsampleSelection::new(chosen, vec![1.0; r], r as f64, r as f64 / n as f64)
}

/// Union of a target-guided selection of `⌈c·r_total⌉` rows and a Poisson
/// draw from `probs` (nominal size `(1 − c)·r_total`).
///
/// A row picked by both keeps the target-guided weight of one.
pub fn combined_select<R: Rng + ?Sized>(
    external: &RegressionDataset,
    beta_target: &DVector<f64>,
    probs: &SamplingProbabilities,
    r_total: usize,
    c: f64,
    rng: &mut R,
) -> Result<SubsampleSelection> {
    let n = external.n_rows();
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!("combined fraction {c} outside [0, 1]")));
    }
    if r_total == 0 || r_total > n {
        return Err(Error::RateOutOfRange { r: r_total as f64, n });
    }
    if probs.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} probabilities for {} external rows",
            probs.len(),
            n
        )));
    }
    let random_part = (1.0 - c) * r_total as f64;
    let tg_size = (c * r_total as f64 - 1e-9).ceil().max(0.0) as usize;

    if tg_size == 0 {
        check_nominal(probs, random_part)?;
        return Ok(poisson_sample(probs, rng));
    }
    let tg = target_guided_select(external, beta_target, tg_size)?;
    if random_part <= 0.0 {
        return Ok(tg);
    }
    check_nominal(probs, random_part)?;
    let rs = poisson_sample(probs, rng);

    let mut indices = Vec::with_capacity(tg.len() + rs.len());
    let mut weights = Vec::with_capacity(tg.len() + rs.len());
    let (mut i, mut j) = (0, 0);
    let (ti, ri) = (tg.indices(), rs.indices());
    while i < ti.len() || j < ri.len() {
        let take_tg = j >= ri.len() || (i < ti.len() && ti[i] <= ri[j]);
        if take_tg {
            if j < ri.len() && ri[j] == ti[i] {
                j += 1;
            }
            indices.push(ti[i]);
            weights.push(1.0);
            i += 1;
        } else {
            indices.push(ri[j]);
            weights.push(rs.weights()[j]);
            j += 1;
        }
    }
    SubsampleSelection::new(indices, weights, r_total as f64, r_total as f64 / n as f64)
}

fn check_nominal(probs: &SamplingProbabilities, expected: f64) -> Result<()> {
    if (probs.nominal_size() - expected).abs() > 1e-6 * expected.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "probabilities have nominal size {}, expected {}",
            probs.nominal_size(),
            expected
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn all_ones_selects_everything() {
        let probs = SamplingProbabilities::new(vec![1.0; 7], 7.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let sel = poisson_sample(&probs, &mut rng);
        assert_eq!(sel.indices(), &[0, 1, 2, 3, 4, 5, 6]);
        assert!(sel.weights().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn certain_row_always_present() {
        let n = 50;
        let tiny = 1e-12;
        let mut pi = vec![tiny; n];
        pi[0] = 1.0;
        let r = 1.0 + tiny * (n - 1) as f64;
        let probs = SamplingProbabilities::new(pi, r).unwrap();
        for seed in 0..100 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let sel = poisson_sample(&probs, &mut rng);
            assert_eq!(sel.indices().first(), Some(&0));
        }
    }

    #[test]
    fn weights_are_inverse_probability() {
        let probs = SamplingProbabilities::new(vec![0.5, 0.25, 1.0, 0.25], 2.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let sel = poisson_sample(&probs, &mut rng);
        for (&e, &w) in sel.indices().iter().zip(sel.weights()) {
            assert!((w - 0.5 / probs.pi()[e]).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let probs = uniform_probabilities(1000, 100.0).unwrap();
        let a = poisson_sample(&probs, &mut ChaCha20Rng::seed_from_u64(5));
        let b = poisson_sample(&probs, &mut ChaCha20Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn uniform_examples() {
        assert!(uniform_probabilities(10, 2.0).unwrap().pi().iter().all(|p| (*p - 0.2).abs() < 1e-15));
        assert!(uniform_probabilities(10, 10.0).unwrap().pi().iter().all(|p| *p == 1.0));
        assert!(matches!(uniform_probabilities(10, 11.0), Err(Error::RateOutOfRange { .. })));
        assert!(matches!(uniform_probabilities(10, 0.0), Err(Error::RateOutOfRange { .. })));
    }

    #[test]
    fn leverage_identity_rows() {
        let t = leverage_norms(&DMatrix::identity(2, 2)).unwrap();
        assert!((t[0] - 1.0).abs() < 1e-14 && (t[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn leverage_three_rows_hand_computed() {
        // Gram [[2,1],[1,2]], inverse (1/3)[[2,-1],[-1,2]]: every row has leverage 2/3
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let t = leverage_norms(&x).unwrap();
        for v in &t {
            assert!((v - (2.0f64 / 3.0).sqrt()).abs() < 1e-14);
        }
        let total: f64 = t.iter().map(|v| v * v).sum();
        assert!((total - 2.0).abs() < 1e-12);
        let scaled = leverage_norms(&(x * 5.0)).unwrap();
        for (a, b) in t.iter().zip(&scaled) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn leverage_singular() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        assert_eq!(leverage_norms(&x), Err(Error::SingularGram));
    }

    #[test]
    fn water_fill_equal_scores_is_uniform() {
        let pi = water_fill(&[2.0; 10], 5.0).unwrap();
        assert!(pi.iter().all(|p| (p - 0.5).abs() < 1e-14));
    }

    #[test]
    fn water_fill_caps_the_outlier() {
        // g = 1: row 4 saturated, the rest share 3 equally
        let pi = water_fill(&[1.0, 1.0, 1.0, 1.0, 100.0], 4.0).unwrap();
        for p in &pi[..4] {
            assert!((p - 0.75).abs() < 1e-14);
        }
        assert!((pi[4] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn water_fill_saturates_at_full_size() {
        assert_eq!(water_fill(&[1.0, 5.0, 0.1], 3.0).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn water_fill_handles_sparse_scores() {
        let pi = water_fill(&[0.0, 0.0, 0.0, 5.0], 2.0).unwrap();
        assert_eq!(pi[3], 1.0);
        assert!((pi.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn osmac_proportional_to_residual() {
        // identity-like design with equal leverage, one residual ten times larger
        let n = 40;
        let x = DMatrix::from_fn(n, 1, |_, _| 1.0);
        let y = DVector::from_fn(n, |i, _| if i == 7 { 10.0 } else if i % 2 == 0 { 1.0 } else { -1.0 });
        let beta = DVector::from_element(1, 0.0);
        let out = osmac_probabilities(&x, &y, &beta, 4.0).unwrap();
        assert!(!out.uniform_fallback);
        let ratio = out.probs.pi()[7] / out.probs.pi()[0];
        assert!((ratio - 10.0).abs() < 1e-10);
    }

    #[test]
    fn osmac_zero_residuals_fall_back() {
        let x = DMatrix::from_fn(10, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let beta = DVector::from_vec(vec![1.0, 2.0]);
        let y = &x * &beta;
        let out = osmac_probabilities(&x, &y, &beta, 3.0).unwrap();
        assert!(out.uniform_fallback);
        assert!(out.probs.pi().iter().all(|p| (p - 0.3).abs() < 1e-14));
    }

    fn residual_dataset(res: &[f64]) -> RegressionDataset {
        let n = res.len();
        let x = DMatrix::from_element(n, 1, 1.0);
        RegressionDataset::new(x, DVector::from_column_slice(res)).unwrap()
    }

    #[test]
    fn target_guided_examples() {
        let ext = residual_dataset(&[5.0, -1.0, 3.0, 0.5]);
        let beta = DVector::from_element(1, 0.0);
        let sel = target_guided_select(&ext, &beta, 2).unwrap();
        assert_eq!(sel.indices(), &[1, 3]);
        assert!(sel.weights().iter().all(|w| *w == 1.0));
        let all = target_guided_select(&ext, &beta, 4).unwrap();
        assert_eq!(all.indices(), &[0, 1, 2, 3]);
        assert!(target_guided_select(&ext, &beta, 5).is_err());
        assert!(target_guided_select(&ext, &beta, 0).is_err());
    }

    #[test]
    fn target_guided_tie_break_lower_index() {
        let mut res = vec![9.0; 10];
        res[2] = 1.0;
        res[7] = -1.0;
        res[0] = 0.1;
        let ext = residual_dataset(&res);
        let sel = target_guided_select(&ext, &DVector::from_element(1, 0.0), 2).unwrap();
        assert_eq!(sel.indices(), &[0, 2]);
    }

    #[test]
    fn combined_extremes() {
        let n = 30;
        let res: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let ext = residual_dataset(&res);
        let beta = DVector::from_element(1, 0.0);

        let probs_full = uniform_probabilities(n, 10.0).unwrap();
        let c1 = combined_select(&ext, &beta, &probs_full, 10, 1.0, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(c1, target_guided_select(&ext, &beta, 10).unwrap());

        let c0 = combined_select(&ext, &beta, &probs_full, 10, 0.0, &mut ChaCha20Rng::seed_from_u64(1)).unwrap();
        assert_eq!(c0, poisson_sample(&probs_full, &mut ChaCha20Rng::seed_from_u64(1)));
    }

    #[test]
    fn combined_disjoint_union_sizes() {
        // rows 0..10 have the smallest residuals; Poisson mass only on rows 20..30
        let n = 30;
        let res: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ext = residual_dataset(&res);
        let beta = DVector::from_element(1, 0.0);
        let mut pi = vec![0.0; n];
        for p in pi.iter_mut().skip(20) {
            *p = 1.0;
        }
        let probs = SamplingProbabilities::new(pi, 10.0).unwrap();
        let sel = combined_select(&ext, &beta, &probs, 20, 0.5, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
        assert_eq!(sel.len(), 20);
        assert_eq!(&sel.indices()[..10], &(0..10).collect::<Vec<_>>()[..]);
        assert_eq!(&sel.indices()[10..], &(20..30).collect::<Vec<_>>()[..]);
    }

    #[test]
    fn combined_collision_keeps_unit_weight() {
        let n = 10;
        let res: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let ext = residual_dataset(&res);
        let beta = DVector::from_element(1, 0.0);
        // Poisson draw takes rows 0..4 for sure, weight would be 0.4
        let mut pi = vec![0.0; n];
        for p in pi.iter_mut().take(4) {
            *p = 1.0;
        }
        let probs = SamplingProbabilities::new(pi, 4.0).unwrap();
        let sel = combined_select(&ext, &beta, &probs, 8, 0.5, &mut ChaCha20Rng::seed_from_u64(2)).unwrap();
        assert_eq!(sel.indices(), &[0, 1, 2, 3]);
        assert!(sel.weights().iter().all(|w| *w == 1.0));
    }

    #[test]
    fn combined_rejects_mismatched_nominal_size() {
        let ext = residual_dataset(&[1.0; 10]);
        let beta = DVector::from_element(1, 0.0);
        let probs = uniform_probabilities(10, 5.0).unwrap();
        assert!(combined_select(&ext, &beta, &probs, 8, 0.5, &mut ChaCha20Rng::seed_from_u64(2)).is_err());
    }
}
