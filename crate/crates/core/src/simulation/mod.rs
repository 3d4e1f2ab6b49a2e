//! Synthetic scenarios, trimmed error metrics and the replication engine.

mod experiment;
mod metrics;
mod scenario;

pub use experiment::{
    generate_replication, replication_rng, run_experiment, CellOutcome, EstimatorKind, ExperimentResults, OsmacPilot, ResultRow,
    RESULTS_HEADER,
};
pub use metrics::{emspe, evaluate_estimates, trimmed_mean, MetricsSummary};
pub use scenario::{
    ar1_covariance, gen_covariates, gen_external, gen_target, Case, Covariance, CovariateTail, ScenarioConfig,
};
