//! Optimal transport regularized by Rényi divergences.
//!
//! The central solver is mirror descent over the transport polytope with
//! KL projections computed by Sinkhorn scaling ([`solver::renyi_mirror_descent`]).
//! Around it sit a dual subgradient method, an exact network-simplex solver,
//! Tsallis and KL baselines, a bisection for the `γ`-ball premetric, and
//! experiment helpers for synthetic marginals and cost matrices.

pub mod divergence;
pub mod error;
pub mod experiments;
pub mod model;
pub mod numeric;
pub mod projection;
pub mod solver;

pub use divergence::{
    kl_divergence, mutual_information_alpha, renyi_divergence, renyi_gradient, renyi_objective,
    tsallis_divergence, tsallis_entropy, tsallis_gradient, tsallis_objective, DivergenceValue, Masses,
};
pub use error::{OtError, Result};
pub use model::{
    histogram_from_samples, outer, validate_plan, CostMatrix, Histogram, RegularizerKind, RegularizerSpec,
    SolveReport, Termination, TraceRecord, TransportPlan,
};
pub use projection::{kl_regularized_ot, sinkhorn_project, SinkhornConfig};
