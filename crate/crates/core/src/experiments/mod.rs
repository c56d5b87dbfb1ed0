//! Synthetic instances, error metrics and parameter studies.

pub mod generators;
pub mod metrics;
pub mod sweep;

pub use generators::{build_cost_matrix, generate_marginal, CostFamily, MarginalFamily, MarginalKind, VoterMetric};
pub use metrics::{plan_error_metrics, ErrorMetrics};
pub use sweep::{
    convergence_sweep, regularizer_comparison, solve_regularized, worker_threads, CellOutcome, ComparisonOutcome,
    ComparisonRow, SolverSettings, SweepCell, SweepGrid, THREADS_ENV,
};
