//! Dual ascent for Rényi-regularized transport.
//!
//! For potentials `q ∈ R^{2N}` with `D = M − L*q > 0` on `supp(r cᵀ)`,
//! where `(L*q)_ij = q_i + q_{N+j}`, the dual objective is
//!
//! `Φ(q) = ⟨q, [r; c]⟩ − ε ln Σ t_ij D_ij^{α/(α−1)} + κ(1 − ln κ)`,
//! `κ = εα/(1−α)`, `t = r cᵀ`.
//!
//! Its gradient is `[r; c] − L(P̂)` with `P̂ = κ t D^{1/(α−1)} / Σ t D^{α/(α−1)}`,
//! so the gradient norm is the marginal residual of `P̂`.

use std::time::Instant;

use ndarray::Array2;

use crate::divergence::{renyi_raw, Masses};
use crate::error::{OtError, Result};
use crate::model::{
    check_alpha, frobenius, outer, validate_plan, CostMatrix, Histogram, RegularizerSpec, SolveReport, Termination,
    TraceRecord, TransportPlan,
};
use crate::numeric::NeumaierSum;
use crate::projection::{sinkhorn_project, SinkhornConfig};

/// Steps below this are treated as a collapsed line search.
const MIN_DUAL_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualConfig {
    /// Trial step at the start of every line search.
    pub initial_step: f64,
    /// Factor applied to a rejected step.
    pub shrink: f64,
    pub max_iters: usize,
    /// Stop once the gradient norm is at most this.
    pub grad_tol: f64,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            initial_step: 10.0,
            shrink: 0.5,
            max_iters: 20_000,
            grad_tol: 1e-7,
        }
    }
}

impl DualConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(OtError::InvalidConfig(format!(
                "initial_step must be positive, got {}",
                self.initial_step
            )));
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(OtError::InvalidConfig(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.grad_tol > 0.0) {
            return Err(OtError::InvalidConfig(format!("grad_tol must be positive, got {}", self.grad_tol)));
        }
        Ok(())
    }
}

/// Dual problem data shared by the evaluations.
struct Dual<'a> {
    m: &'a Array2<f64>,
    t: Array2<f64>,
    r: &'a Histogram,
    c: &'a Histogram,
    alpha: f64,
    epsilon: f64,
}

impl Dual<'_> {
    fn n(&self) -> usize {
        self.r.len()
    }

    fn slack(&self, q: &[f64], i: usize, j: usize) -> f64 {
        self.m[[i, j]] - q[i] - q[self.n() + j]
    }

    /// Largest `q_i + q_{N+j} − m_ij` over `supp(r cᵀ)`; negative means
    /// strictly feasible.
    fn max_violation(&self, q: &[f64]) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for &i in self.r.support() {
            for &j in self.c.support() {
                worst = worst.max(-self.slack(q, i, j));
            }
        }
        worst
    }

    /// `Σ t D^{α/(α−1)}` on the support.
    fn power_sum(&self, q: &[f64]) -> f64 {
        let e = self.alpha / (self.alpha - 1.0);
        let mut acc = NeumaierSum::default();
        for &i in self.r.support() {
            for &j in self.c.support() {
                acc.add(self.t[[i, j]] * self.slack(q, i, j).powf(e));
            }
        }
        acc.value()
    }

    fn kappa(&self) -> f64 {
        self.epsilon * self.alpha / (1.0 - self.alpha)
    }

    fn value(&self, q: &[f64]) -> f64 {
        let n = self.n();
        let mut linear = NeumaierSum::default();
        for k in 0..n {
            linear.add(q[k] * self.r.get(k));
            linear.add(q[n + k] * self.c.get(k));
        }
        let kappa = self.kappa();
        linear.value() - self.epsilon * self.power_sum(q).ln() + kappa * (1.0 - kappa.ln())
    }

    /// Unnormalized primal weights `t D^{1/(α−1)}`.
    fn weights(&self, q: &[f64]) -> Array2<f64> {
        let e = 1.0 / (self.alpha - 1.0);
        let mut w = Array2::zeros(self.m.dim());
        for &i in self.r.support() {
            for &j in self.c.support() {
                w[[i, j]] = self.t[[i, j]] * self.slack(q, i, j).powf(e);
            }
        }
        w
    }

    /// Gradient `[r; c] − L(P̂)`.
    fn gradient(&self, q: &[f64]) -> Vec<f64> {
        let n = self.n();
        let w = self.weights(q);
        let scale = self.kappa() / self.power_sum(q);
        let mut g = vec![0.0; 2 * n];
        for k in 0..n {
            g[k] = self.r.get(k) - scale * w.row(k).sum();
            g[n + k] = self.c.get(k) - scale * w.column(k).sum();
        }
        g
    }
}

fn check_problem(m: &CostMatrix, r: &Histogram, c: &Histogram, alpha: f64, epsilon: f64) -> Result<()> {
    check_alpha(alpha)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(OtError::InvalidRegularizer(format!("epsilon must be positive, got {epsilon}")));
    }
    if r.len() != c.len() || m.n() != r.len() {
        return Err(OtError::ShapeMismatch {
            expected: (r.len(), c.len()),
            got: m.entries().dim(),
        });
    }
    Ok(())
}

/// `Φ(q)`; `-inf` when `q` is not strictly feasible.
pub fn dual_objective(
    q: &[f64],
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    check_problem(m, r, c, alpha, epsilon)?;
    check_dual_len(q, r.len())?;
    let dual = Dual {
        m: m.entries(),
        t: outer(r, c),
        r,
        c,
        alpha,
        epsilon,
    };
    Ok(if dual.max_violation(q) < 0.0 {
        dual.value(q)
    } else {
        f64::NEG_INFINITY
    })
}

fn check_dual_len(q: &[f64], n: usize) -> Result<()> {
    if q.len() != 2 * n {
        return Err(OtError::DimensionMismatch(format!(
            "dual vector has length {}, expected {}",
            q.len(),
            2 * n
        )));
    }
    Ok(())
}

/// Recovers the plan `t D^{1/(α−1)}` normalized to unit mass. Its marginals
/// are exact only at the dual optimum; the residual is recorded, not
/// enforced.
pub fn plan_from_duals(q: &[f64], m: &CostMatrix, r: &Histogram, c: &Histogram, alpha: f64) -> Result<TransportPlan> {
    check_alpha(alpha)?;
    check_dual_len(q, r.len())?;
    let dual = Dual {
        m: m.entries(),
        t: outer(r, c),
        r,
        c,
        alpha,
        epsilon: 1.0,
    };
    for &i in r.support() {
        for &j in c.support() {
            if !(dual.slack(q, i, j) > 0.0) {
                return Err(OtError::InfeasibleDuals { row: i, col: j });
            }
        }
    }
    let mut w = dual.weights(q);
    let total: f64 = w.iter().copied().collect::<NeumaierSum>().value();
    w.mapv_inplace(|v| v / total);
    // Any plan's residual is at most 2, so this only checks sign, support
    // and mass.
    validate_plan(w, r, c, 2.0)
}

/// [`plan_from_duals`] followed by a KL projection onto `U(r, c)`.
pub fn plan_from_duals_projected(
    q: &[f64],
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    cfg: &SinkhornConfig,
) -> Result<TransportPlan> {
    let plan = plan_from_duals(q, m, r, c, alpha)?;
    sinkhorn_project(plan.entries(), r, c, cfg)
}

/// Gradient ascent on `Φ` from `q = −1` with a backtracking line search that
/// keeps every iterate strictly feasible and never decreases `Φ`.
///
/// The report's `objective_value` is `Φ` at the returned potentials and its
/// trace records `Φ` with the gradient norm as marginal residual.
pub fn dual_subgradient(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
    cfg: &DualConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    dual_subgradient_observed(m, r, c, alpha, epsilon, cfg, |_, _| {})
}

/// [`dual_subgradient`] calling `observer(k, q_k)` for every accepted
/// iterate, starting with `k = 0`.
pub fn dual_subgradient_observed(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
    cfg: &DualConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<(Vec<f64>, SolveReport)> {
    let clock = Instant::now();
    check_problem(m, r, c, alpha, epsilon)?;
    cfg.validate()?;
    let spec = RegularizerSpec::renyi(alpha, epsilon)?;
    let n = r.len();
    let dual = Dual {
        m: m.entries(),
        t: outer(r, c),
        r,
        c,
        alpha,
        epsilon,
    };
    let mut q = vec![-1.0; 2 * n];
    let mut phi = dual.value(&q);
    let mut g = dual.gradient(&q);
    let norm = |g: &[f64]| g.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut trace = vec![TraceRecord {
        iteration: 0,
        objective: phi,
        step_size: 0.0,
        marginal_residual: norm(&g),
    }];
    observer(0, &q);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    for k in 1..=cfg.max_iters {
        if norm(&g) <= cfg.grad_tol {
            termination = Termination::IterateResidual;
            break;
        }
        let mut step = cfg.initial_step;
        let accepted = loop {
            if step < MIN_DUAL_STEP {
                break None;
            }
            let trial: Vec<f64> = q.iter().zip(&g).map(|(qi, gi)| qi + step * gi).collect();
            if dual.max_violation(&trial) < 0.0 {
                let value = dual.value(&trial);
                if value >= phi {
                    break Some((trial, value));
                }
            }
            step *= cfg.shrink;
        };
        let Some((next, value)) = accepted else {
            termination = Termination::StepCollapse;
            break;
        };
        q = next;
        phi = value;
        g = dual.gradient(&q);
        iterations = k;
        trace.push(TraceRecord {
            iteration: k,
            objective: phi,
            step_size: step,
            marginal_residual: norm(&g),
        });
        observer(k, &q);
    }
    if termination == Termination::MaxIterations && norm(&g) <= cfg.grad_tol {
        termination = Termination::IterateResidual;
    }
    let plan = plan_from_duals(&q, m, r, c, alpha)?;
    let transport_cost = frobenius(m.entries(), plan.entries());
    let divergence_value = renyi_raw(&plan.masses(), &dual.t.masses(), alpha).value();
    let report = SolveReport {
        plan,
        regularizer: spec,
        objective_value: phi,
        transport_cost,
        divergence_value,
        iterations,
        trace,
        termination,
        wall_time: clock.elapsed().as_secs_f64(),
    };
    Ok((q, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::histogram_from_samples;
    use ndarray::array;

    fn h(v: &[f64]) -> Histogram {
        histogram_from_samples(v).unwrap()
    }

    #[test]
    fn constant_cost_recovers_independent_coupling() {
        let r = h(&[0.2, 0.3, 0.5]);
        let c = h(&[0.1, 0.6, 0.3]);
        let m = CostMatrix::from_fn(3, |_, _| 2.0).unwrap();
        let q = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5];
        let plan = plan_from_duals(&q, &m, &r, &c, 0.3).unwrap();
        assert!(plan.max_abs_diff(&outer(&r, &c)) < 1e-15);
        assert!((plan.entries().sum() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible_duals_rejected() {
        let r = h(&[0.5, 0.5]);
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let err = plan_from_duals(&[0.0, -1.0, 0.0, -1.0], &m, &r, &r, 0.5).unwrap_err();
        assert_eq!(err, OtError::InfeasibleDuals { row: 0, col: 0 });
        assert_eq!(dual_objective(&[0.0, -1.0, 0.0, -1.0], &m, &r, &r, 0.5, 1.0).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let r = h(&[0.2, 0.3, 0.5]);
        let c = h(&[0.4, 0.4, 0.2]);
        let m = CostMatrix::from_fn(3, |i, j| (i as f64 - j as f64).powi(2)).unwrap();
        let dual = Dual {
            m: m.entries(),
            t: outer(&r, &c),
            r: &r,
            c: &c,
            alpha: 0.4,
            epsilon: 0.7,
        };
        let q = vec![-0.3, -0.2, -0.5, -0.1, -0.4, -0.6];
        let g = dual.gradient(&q);
        let h = 1e-6;
        for k in 0..6 {
            let mut up = q.clone();
            let mut down = q.clone();
            up[k] += h;
            down[k] -= h;
            let fd = (dual.value(&up) - dual.value(&down)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "k={k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn ascent_is_monotone_and_feasible() {
        let r = h(&[0.3, 0.3, 0.4]);
        let c = h(&[0.5, 0.2, 0.3]);
        let m = CostMatrix::from_fn(3, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let mut worst = f64::NEG_INFINITY;
        let (q, rep) = dual_subgradient_observed(&m, &r, &c, 0.5, 0.5, &DualConfig::default(), |_, q| {
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max(q[i] + q[3 + j] - m.entries()[[i, j]]);
                }
            }
        })
        .unwrap();
        assert!(worst < 0.0);
        assert!(rep.trace.windows(2).all(|w| w[1].objective >= w[0].objective));
        assert_eq!(q.len(), 6);
        assert!(rep.plan.marginal_residual() < 1e-4);
    }
}
