//! Parameter sweeps over `(α, ε)` and side-by-side regularizer comparisons.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{OtError, Result};
use crate::experiments::metrics::{plan_error_metrics, ErrorMetrics};
use crate::model::{CostMatrix, Histogram, RegularizerKind, RegularizerSpec, SolveReport, Termination};
use crate::projection::{kl_regularized_ot, SinkhornConfig};
use crate::solver::{
    exact_ot, renyi_mirror_descent, tsallis_entropy_mirror_descent, tsallis_mirror_descent, MirrorDescentConfig,
};

/// Environment variable capping the number of worker threads of a sweep.
pub const THREADS_ENV: &str = "RENYI_OT_THREADS";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolverSettings {
    pub mirror: MirrorDescentConfig,
    /// Scaling settings of the KL baseline; `None` picks
    /// [`SinkhornConfig::for_kl_baseline`] per `ε`.
    pub kl: Option<SinkhornConfig>,
}

/// Solves one regularized problem with the matching solver. The KL baseline
/// retries in the log domain when the linear kernel underflows.
pub fn solve_regularized(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    spec: &RegularizerSpec,
    settings: &SolverSettings,
) -> Result<SolveReport> {
    let eps = spec.epsilon();
    match spec.kind() {
        RegularizerKind::Renyi { alpha } => renyi_mirror_descent(m, r, c, alpha, eps, &settings.mirror),
        RegularizerKind::Tsallis { q } => tsallis_mirror_descent(m, r, c, q, eps, &settings.mirror),
        RegularizerKind::TsallisEntropy { q } => tsallis_entropy_mirror_descent(m, r, c, q, eps, &settings.mirror),
        RegularizerKind::None => exact_ot(m, r, c),
        RegularizerKind::Kl => {
            let cfg = settings.kl.unwrap_or_else(|| SinkhornConfig::for_kl_baseline(eps));
            match kl_regularized_ot(m, r, c, eps, &cfg) {
                Err(OtError::NumericalUnderflow) => kl_regularized_ot(
                    m,
                    r,
                    c,
                    eps,
                    &SinkhornConfig {
                        log_domain: true,
                        ..cfg
                    },
                ),
                other => other,
            }
        }
    }
}

/// Worker count from [`THREADS_ENV`], or rayon's default when unset or
/// invalid.
pub fn worker_threads() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(rayon::current_num_threads)
}

fn in_pool<T: Send>(job: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_threads()).build() {
        Ok(pool) => pool.install(job),
        Err(_) => job(),
    }
}

/// Result of one solve, measured against reference plans.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellOutcome {
    Solved {
        objective: f64,
        transport_cost: f64,
        divergence: f64,
        iterations: usize,
        termination: Termination,
        vs_exact: ErrorMetrics,
        /// Absent when the KL baseline failed at this `ε`.
        vs_kl: Option<ErrorMetrics>,
    },
    Failed {
        error: String,
    },
}

impl CellOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            Self::Solved { objective, .. } => Some(*objective),
            Self::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub alpha: f64,
    pub epsilon: f64,
    #[serde(flatten)]
    pub outcome: CellOutcome,
}

/// Cells in `ε`-major order: all `α` for the first `ε`, then the next.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub exact_cost: f64,
    pub cells: Vec<SweepCell>,
}

impl SweepGrid {
    pub fn cell(&self, alpha_index: usize, eps_index: usize) -> &SweepCell {
        &self.cells[eps_index * self.alphas.len() + alpha_index]
    }
}

/// Runs Rényi mirror descent on every `(α, ε)` pair and compares each plan
/// with the exact plan and with the KL-regularized plan at the same `ε`.
/// Failing cells keep their place in the grid.
pub fn convergence_sweep(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alphas: &[f64],
    epsilons: &[f64],
    settings: &SolverSettings,
) -> Result<SweepGrid> {
    if alphas.is_empty() || epsilons.is_empty() {
        return Err(OtError::InvalidConfig("sweep grids must be nonempty".into()));
    }
    let exact = exact_ot(m, r, c)?;
    let cells = in_pool(|| {
        let kl_plans: Vec<Result<SolveReport>> = epsilons
            .par_iter()
            .map(|&eps| solve_regularized(m, r, c, &RegularizerSpec::kl(eps)?, settings))
            .collect();
        let pairs: Vec<(usize, f64, f64)> = epsilons
            .iter()
            .enumerate()
            .flat_map(|(k, &eps)| alphas.iter().map(move |&alpha| (k, alpha, eps)))
            .collect();
        pairs
            .par_iter()
            .map(|&(k, alpha, epsilon)| {
                let outcome = match renyi_mirror_descent(m, r, c, alpha, epsilon, &settings.mirror)
                    .and_then(|rep| Ok((plan_error_metrics(&rep.plan, &exact.plan, m)?, rep)))
                {
                    Ok((vs_exact, rep)) => CellOutcome::Solved {
                        objective: rep.objective_value,
                        transport_cost: rep.transport_cost,
                        divergence: rep.divergence_value,
                        iterations: rep.iterations,
                        termination: rep.termination,
                        vs_exact,
                        vs_kl: kl_plans[k]
                            .as_ref()
                            .ok()
                            .and_then(|kl| plan_error_metrics(&rep.plan, &kl.plan, m).ok()),
                    },
                    Err(e) => CellOutcome::Failed { error: e.to_string() },
                };
                SweepCell {
                    alpha,
                    epsilon,
                    outcome,
                }
            })
            .collect::<Vec<SweepCell>>()
    });
    Ok(SweepGrid {
        alphas: alphas.to_vec(),
        epsilons: epsilons.to_vec(),
        exact_cost: exact.transport_cost,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub label: String,
    pub regularizer: RegularizerSpec,
    #[serde(flatten)]
    pub outcome: ComparisonOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ComparisonOutcome {
    Solved {
        objective: f64,
        metrics: ErrorMetrics,
    },
    Failed {
        error: String,
    },
}

impl ComparisonRow {
    pub fn metrics(&self) -> Option<&ErrorMetrics> {
        match &self.outcome {
            ComparisonOutcome::Solved { metrics, .. } => Some(metrics),
            ComparisonOutcome::Failed { .. } => None,
        }
    }
}

/// Solves every regularizer and measures its plan against the exact plan.
/// Rows are sorted by increasing mean squared error; failures come last.
pub fn regularizer_comparison(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    specs: &[RegularizerSpec],
    settings: &SolverSettings,
) -> Result<Vec<ComparisonRow>> {
    if specs.is_empty() {
        return Err(OtError::InvalidConfig("no regularizers to compare".into()));
    }
    let exact = exact_ot(m, r, c)?;
    let mut rows: Vec<ComparisonRow> = in_pool(|| {
        specs
            .par_iter()
            .map(|spec| {
                let outcome = match solve_regularized(m, r, c, spec, settings)
                    .and_then(|rep| Ok((plan_error_metrics(&rep.plan, &exact.plan, m)?, rep.objective_value)))
                {
                    Ok((metrics, objective)) => ComparisonOutcome::Solved { objective, metrics },
                    Err(e) => ComparisonOutcome::Failed { error: e.to_string() },
                };
                ComparisonRow {
                    label: spec.label(),
                    regularizer: *spec,
                    outcome,
                }
            })
            .collect()
    });
    rows.sort_by(|a, b| {
        let key = |row: &ComparisonRow| row.metrics().map_or(f64::INFINITY, |m| m.mse);
        key(a).total_cmp(&key(b))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::histogram_from_samples;
    use ndarray::array;

    fn instance() -> (CostMatrix, Histogram, Histogram) {
        let r = histogram_from_samples(&[0.2, 0.5, 0.3]).unwrap();
        let c = histogram_from_samples(&[0.4, 0.1, 0.5]).unwrap();
        let m = CostMatrix::from_fn(3, |i, j| ((i as f64 - j as f64) / 2.0).powi(2)).unwrap();
        (m, r, c)
    }

    #[test]
    fn single_cell_grid_is_a_single_solve() {
        let (m, r, c) = instance();
        let settings = SolverSettings::default();
        let grid = convergence_sweep(&m, &r, &c, &[0.3], &[0.5], &settings).unwrap();
        let direct = renyi_mirror_descent(&m, &r, &c, 0.3, 0.5, &settings.mirror).unwrap();
        assert_eq!(grid.cells.len(), 1);
        assert_eq!(grid.cell(0, 0).outcome.objective(), Some(direct.objective_value));
    }

    #[test]
    fn failing_cells_keep_grid_rectangular() {
        let (m, r, c) = instance();
        let grid = convergence_sweep(&m, &r, &c, &[0.5, 1.5], &[0.1, 1.0], &SolverSettings::default()).unwrap();
        assert_eq!(grid.cells.len(), 4);
        assert!(matches!(grid.cell(1, 0).outcome, CellOutcome::Failed { .. }));
        assert!(matches!(grid.cell(0, 1).outcome, CellOutcome::Solved { .. }));
    }

    #[test]
    fn unregularized_row_has_zero_error() {
        let (m, r, c) = instance();
        let specs = [
            RegularizerSpec::kl(0.1).unwrap(),
            RegularizerSpec::unregularized(),
            RegularizerSpec::renyi(0.5, 0.1).unwrap(),
        ];
        let rows = regularizer_comparison(&m, &r, &c, &specs, &SolverSettings::default()).unwrap();
        assert_eq!(rows[0].label, "none");
        let e = rows[0].metrics().unwrap();
        assert_eq!((e.abs_mean, e.mse, e.kl_error), (0.0, 0.0, 0.0));
        assert!(rows.windows(2).all(|w| w[0].metrics().unwrap().mse <= w[1].metrics().unwrap().mse));
    }

    #[test]
    fn kl_falls_back_to_log_domain() {
        let r = histogram_from_samples(&[0.5, 0.5]).unwrap();
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let settings = SolverSettings {
            kl: Some(SinkhornConfig::default()),
            ..Default::default()
        };
        let rep = solve_regularized(&m, &r, &r, &RegularizerSpec::kl(1e-4).unwrap(), &settings).unwrap();
        assert!(rep.transport_cost < 1e-6);
    }
}
