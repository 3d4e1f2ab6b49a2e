//! Data containers: regression datasets, subsample selections, penalty
//! specifications, and the fused problem that ties them together.
//!
//! Every container validates its invariants on construction and is
//! immutable afterwards, so values can be shared freely across threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense design matrix with its response vector.
///
/// An intercept, when wanted, is an explicit all-ones column.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

impl RegressionDataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        validate_parts(&x, &y)?;
        Ok(Self { x, y })
    }

    /// Builds a dataset from row-major design values.
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::DimensionMismatch("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        Self::new(x, DVector::from_column_slice(y))
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    /// Copies the given rows into a new design matrix and response.
    pub fn gather(&self, indices: &[usize]) -> (DMatrix<f64>, DVector<f64>) {
        let d = self.n_cols();
        let x = DMatrix::from_fn(indices.len(), d, |i, j| self.x[(indices[i], j)]);
        let y = DVector::from_fn(indices.len(), |i, _| self.y[indices[i]]);
        (x, y)
    }

    pub fn into_parts(self) -> (DMatrix<f64>, DVector<f64>) {
        (self.x, self.y)
    }
}

/// Checks the dataset invariants without constructing one.
pub fn validate_dataset(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    validate_parts(x, y)
}

fn validate_parts(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::DimensionMismatch(format!(
            "design must be non-empty, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {} rows but response has length {}",
            x.nrows(),
            y.len()
        )));
    }
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].is_finite() {
                return Err(Error::NonFiniteEntry { row: i, col: j });
            }
        }
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        // the response is reported as the column after the design
        return Err(Error::NonFiniteEntry { row: i, col: x.ncols() });
    }
    Ok(())
}

/// Rows chosen from the external data, with their fusion weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleSelection {
    indices: Vec<usize>,
    weights: Vec<f64>,
    nominal_size: f64,
    rate: f64,
}

impl SubsampleSelection {
    /// `indices` must be strictly increasing; `weights` positive and finite.
    pub fn new(indices: Vec<usize>, weights: Vec<f64>, nominal_size: f64, rate: f64) -> Result<Self> {
        if indices.len() != weights.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} indices but {} weights",
                indices.len(),
                weights.len()
            )));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "selection indices must be strictly increasing".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!("selection weight {w} is not positive and finite")));
        }
        if !(nominal_size.is_finite() && nominal_size >= 0.0) {
            return Err(Error::InvalidArgument(format!("nominal size {nominal_size} is invalid")));
        }
        if !(rate.is_finite() && rate > 0.0 && rate <= 1.0) && !(rate == 0.0 && nominal_size == 0.0) {
            return Err(Error::InvalidArgument(format!("sampling rate {rate} outside (0, 1]")));
        }
        Ok(Self { indices, weights, nominal_size, rate })
    }

    /// Every external row with unit weight.
    pub fn full(n_external: usize) -> Self {
        Self {
            indices: (0..n_external).collect(),
            weights: vec![1.0; n_external],
            nominal_size: n_external as f64,
            rate: 1.0,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn nominal_size(&self) -> f64 {
        self.nominal_size
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PenaltyKind {
    /// `P(γ) = 2|γ|`; soft thresholding, Huber loss.
    L1,
    /// `P(γ) = γ²`; linear shrinkage, scaled squared loss.
    L2,
}

impl PenaltyKind {
    /// The exponent ν in `P(γ) = 2ν⁻¹|γ|^ν`.
    pub fn exponent(self) -> f64 {
        match self {
            PenaltyKind::L1 => 1.0,
            PenaltyKind::L2 => 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    lambda: f64,
}

impl PenaltySpec {
    pub fn new(kind: PenaltyKind, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and nonnegative")));
        }
        Ok(Self { kind, lambda })
    }

    pub fn l1(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::L1, lambda)
    }

    pub fn l2(lambda: f64) -> Result<Self> {
        Self::new(PenaltyKind::L2, lambda)
    }

    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.kind, lambda)
    }
}

/// Target data, external data and a weighted selection of external rows.
///
/// The external dataset is borrowed, never copied; solvers gather only the
/// selected rows.
#[derive(Debug, Clone, Copy)]
pub struct FusedProblem<'a> {
    target: &'a RegressionDataset,
    external: &'a RegressionDataset,
    selection: &'a SubsampleSelection,
    penalty: PenaltySpec,
}

impl<'a> FusedProblem<'a> {
    pub fn target(&self) -> &'a RegressionDataset {
        self.target
    }

    pub fn external(&self) -> &'a RegressionDataset {
        self.external
    }

    pub fn selection(&self) -> &'a SubsampleSelection {
        self.selection
    }

    pub fn penalty(&self) -> PenaltySpec {
        self.penalty
    }

    pub fn n_cols(&self) -> usize {
        self.target.n_cols()
    }

    /// Same data with a different penalty.
    pub fn with_penalty(&self, penalty: PenaltySpec) -> Self {
        Self { penalty, ..*self }
    }

    /// Gathers the selected external rows: `(X_B*, y_B*, w)`.
    pub fn selected_rows(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let (x, y) = self.external.gather(self.selection.indices());
        (x, y, DVector::from_column_slice(self.selection.weights()))
    }
}

/// Validates and bundles a fused estimation problem.
pub fn assemble_problem<'a>(
    target: &'a RegressionDataset,
    external: &'a RegressionDataset,
    selection: &'a SubsampleSelection,
    penalty: PenaltySpec,
) -> Result<FusedProblem<'a>> {
    if target.n_cols() != external.n_cols() {
        return Err(Error::ColumnCountMismatch {
            target: target.n_cols(),
            external: external.n_cols(),
        });
    }
    let n_b = external.n_rows();
    if let Some(&index) = selection.indices().iter().find(|&&i| i >= n_b) {
        return Err(Error::IndexOutOfRange { index, len: n_b });
    }
    let rows = target.n_rows() + selection.len();
    let cols = target.n_cols();
    if rows <= cols {
        return Err(Error::UnderdeterminedProblem { rows, cols });
    }
    Ok(FusedProblem { target, external, selection, penalty })
}

/// Output of a fused fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub beta: DVector<f64>,
    /// One mean-shift estimate per selected external row, in selection order.
    pub gamma: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub penalty: PenaltySpec,
    /// Degrees of freedom, residual sums and information criteria. `None`
    /// when the external subsample is too small for them to be defined.
    pub criteria: Option<ModelCriteria>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelCriteria {
    pub df: f64,
    pub rss_target: f64,
    pub rss_external: f64,
    pub aic: f64,
    pub bic: f64,
}
