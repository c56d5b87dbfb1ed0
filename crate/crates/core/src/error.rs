use thiserror::Error;

/// Errors produced by the data model, divergences and solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum OtError {
    #[error("empty input")]
    EmptyInput,
    #[error("negative mass {value} at index {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("total mass is zero")]
    ZeroTotalMass,
    #[error("total mass {total} deviates from 1 by more than {tol}")]
    MassDeviation { total: f64, tol: f64 },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("negative entry {value} at ({row}, {col})")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("marginal residual {residual:e} exceeds tolerance {tol:e}")]
    MarginalViolation { residual: f64, tol: f64 },
    #[error("mass {value:e} at ({row}, {col}) lies outside the support of r c^T")]
    SupportViolation { row: usize, col: usize, value: f64 },
    #[error("cost matrix entry ({row}, {col}) is negative or not finite")]
    InvalidCost { row: usize, col: usize },
    #[error("cost matrix flagged symmetric but ({row}, {col}) differs from its transpose")]
    AsymmetricCost { row: usize, col: usize },
    #[error("alpha = {0} is outside (0, 1)")]
    AlphaOutOfRange(f64),
    #[error("q = {0} must be positive and different from 1")]
    QOutOfRange(f64),
    #[error("invalid regularizer: {0}")]
    InvalidRegularizer(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("gradient undefined: plan entry ({row}, {col}) is zero on the support of r c^T")]
    BoundaryPoint { row: usize, col: usize },
    #[error("kernel has an empty {axis} {index} where the marginal is positive")]
    InfeasibleKernel { axis: &'static str, index: usize },
    #[error("Sinkhorn did not reach tolerance after {sweeps} sweeps (residual {residual:e})")]
    MaxSweepsExceeded {
        sweeps: usize,
        residual: f64,
        best: Box<ndarray::Array2<f64>>,
    },
    #[error("kernel exp(-M/eps) underflows in the linear domain; retry with log_domain = true")]
    NumericalUnderflow,
    #[error("inner projection failed at iteration {iteration}: {source}")]
    InnerProjectionFailure {
        iteration: usize,
        #[source]
        source: Box<OtError>,
    },
    #[error("zero gradient")]
    ZeroGradient,
    #[error("dual vector is not strictly feasible at ({row}, {col})")]
    InfeasibleDuals { row: usize, col: usize },
    #[error("bisection on epsilon failed: divergence {low:e}..{high:e} does not bracket gamma = {gamma:e}")]
    BisectionFailure { gamma: f64, low: f64, high: f64 },
    #[error("marginal family evaluates to zero on every grid point")]
    DegenerateFamily,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

pub type Result<T> = std::result::Result<T, OtError>;
