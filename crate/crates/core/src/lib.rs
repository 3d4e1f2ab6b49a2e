//! Robust transfer learning for linear regression by subsampling a
//! contaminated external dataset.
//!
//! A small, clean target sample is fused with a weighted subsample of a large
//! external sample whose rows may carry unknown mean shifts. Each selected
//! external row gets its own shift parameter, penalized by an ℓ1 or ℓ2 term;
//! the resulting estimator is equivalent to a Huber-type (ℓ1) or shrunken
//! (ℓ2) robust regression on the fused data.
//!
//! Modules:
//! - [`data`]: datasets, selections, penalties, fused problems and fit results
//! - [`penalty`]: thresholding, robust loss and score functions
//! - [`sampling`]: Poisson, leverage-optimal, OSMAC, target-guided and combined selection
//! - [`estimator`]: fixed-point and closed-form solvers, estimator combining
//! - [`tuning`]: λ grids, degrees of freedom, AIC/BIC selection
//! - [`simulation`]: synthetic scenarios, trimmed metrics and the replication engine
//! - [`screening`]: marginal t-tests with Benjamini–Hochberg control
//! - [`io`] and [`config`]: CSV datasets and JSON experiment configs

pub mod config;
pub mod data;
pub mod error;
pub mod estimator;
pub mod io;
pub mod linalg;
pub mod penalty;
pub mod sampling;
pub mod screening;
pub mod simulation;
pub mod tuning;

pub use data::{
    assemble_problem, FitResult, FusedProblem, ModelCriteria, PenaltyKind, PenaltySpec, RegressionDataset,
    SubsampleSelection,
};
pub use error::{Error, Result};
