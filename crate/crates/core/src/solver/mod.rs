//! Solvers for regularized and unregularized transport.

pub mod dual;
pub mod exact;
pub mod mirror;
pub mod premetric;

pub use dual::{
    dual_objective, dual_subgradient, dual_subgradient_observed, plan_from_duals, plan_from_duals_projected, DualConfig,
};
pub use exact::exact_ot;
pub use mirror::{
    polyak_step, polyak_step_with, renyi_mirror_descent, renyi_mirror_descent_from, tsallis_entropy_mirror_descent,
    tsallis_mirror_descent,
    GradientNorm, MirrorDescentConfig, StepRule,
};
pub use premetric::{premetric_ball_solve, PremetricConfig};
