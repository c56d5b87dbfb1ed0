//! Mirror descent over `U(r, c)` with the entropy mirror map: each step
//! multiplies the iterate by `exp(−η ∇f)` and KL-projects back with Sinkhorn
//! scaling.

use std::time::Instant;

use ndarray::{Array2, Zip};

use crate::divergence::{renyi_raw, tsallis_entropy, tsallis_raw, Masses};
use crate::error::{OtError, Result};
use crate::model::{
    check_alpha, check_q, frobenius, outer, validate_plan, CostMatrix, Histogram, RegularizerSpec, SolveReport,
    Termination, TraceRecord, TransportPlan,
};
use crate::numeric::NeumaierSum;
use crate::projection::{scale_linear_from, scale_log_from, Scaled, SinkhornConfig};

/// Lowest exponent fed to `exp` in the multiplicative update.
const MIN_EXPONENT: f64 = -700.0;
/// Floor for on-support entries so the next gradient stays finite.
const ENTRY_FLOOR: f64 = 1e-300;

/// Norm of the gradient used in the Polyak denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientNorm {
    Frobenius,
    /// Largest absolute entry, dual to the 1-norm in which the entropy is
    /// strongly convex.
    Max,
}

impl GradientNorm {
    pub fn of(&self, g: &Array2<f64>) -> f64 {
        let max = g.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        match self {
            Self::Max => max,
            Self::Frobenius if max == 0.0 || !max.is_finite() => max,
            Self::Frobenius => max * g.iter().map(|&v| (v / max).powi(2)).sum::<f64>().sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// `η_k = (f(P_k) − f̂_k)/(c ‖∇f(P_k)‖²)` with the target `f̂_k` equal to
    /// the best objective so far minus `δ_k`; `δ` halves whenever an
    /// iteration fails to improve the best value by `δ_k`. `delta0 = None`
    /// means `1e-2 · f(P⁰)`.
    GeneralizedPolyak {
        c: f64,
        delta0: Option<f64>,
        norm: GradientNorm,
    },
    Constant {
        eta: f64,
    },
    /// `η_k = θ/‖∇f(P_k)‖_∞`.
    Normalized {
        theta: f64,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        Self::Normalized { theta: 1.0 }
    }
}

impl StepRule {
    /// Polyak rule with `c = 1`, `δ0 = 1e-2 f(P⁰)` and the Frobenius norm.
    pub fn polyak() -> Self {
        Self::GeneralizedPolyak {
            c: 1.0,
            delta0: None,
            norm: GradientNorm::Frobenius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MirrorDescentConfig {
    pub step_rule: StepRule,
    /// Stop once `‖P_k − P_{k−1}‖_F` is at most this.
    pub iterate_tol: f64,
    pub max_iters: usize,
    pub inner: SinkhornConfig,
}

impl Default for MirrorDescentConfig {
    fn default() -> Self {
        Self {
            step_rule: StepRule::default(),
            iterate_tol: 1e-6,
            max_iters: 5000,
            inner: SinkhornConfig::default(),
        }
    }
}

impl MirrorDescentConfig {
    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        if !(self.iterate_tol > 0.0) {
            return Err(OtError::InvalidConfig(format!(
                "iterate_tol must be positive, got {}",
                self.iterate_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidConfig("max_iters must be at least 1".into()));
        }
        match self.step_rule {
            StepRule::GeneralizedPolyak { c, delta0, .. } => {
                if !(c > 0.0 && c.is_finite()) {
                    return Err(OtError::InvalidConfig(format!("Polyak constant must be positive, got {c}")));
                }
                if let Some(d) = delta0 {
                    if !(d > 0.0 && d.is_finite()) {
                        return Err(OtError::InvalidConfig(format!("delta0 must be positive, got {d}")));
                    }
                }
            }
            StepRule::Constant { eta } | StepRule::Normalized { theta: eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(OtError::InvalidConfig(format!("step size must be positive, got {eta}")));
                }
            }
        }
        Ok(())
    }
}

/// `(f_curr − f_best_est)/(c ‖grad‖²)` in the Frobenius norm.
pub fn polyak_step(f_curr: f64, f_best_est: f64, grad: &Array2<f64>, c_const: f64) -> Result<f64> {
    polyak_step_with(f_curr, f_best_est, grad, c_const, GradientNorm::Frobenius)
}

pub fn polyak_step_with(f_curr: f64, f_best_est: f64, grad: &Array2<f64>, c_const: f64, norm: GradientNorm) -> Result<f64> {
    let g = norm.of(grad);
    if g == 0.0 {
        return Err(OtError::ZeroGradient);
    }
    Ok(((f_curr - f_best_est) / (c_const * g * g)).max(0.0))
}

/// `⟨M, P⟩ + ε φ(Σ t (P/t)^a)` for the Rényi (`φ = ln(·)/(a−1)`) and
/// Tsallis (`φ = (· − 1)/(a−1)`) regularizers, evaluated together with its
/// gradient so each entry needs a single `powf`. With `t` the indicator of
/// `supp(r cᵀ)` the Tsallis form is the negative Tsallis entropy.
pub(crate) struct PowerObjective<'a> {
    pub m: &'a Array2<f64>,
    pub t: Array2<f64>,
    pub order: f64,
    pub epsilon: f64,
    pub logarithmic: bool,
    /// Clamp rounding noise below zero, valid for divergences.
    pub nonnegative: bool,
}

impl PowerObjective<'_> {
    /// Objective value and gradient at a plan positive on `supp(t)`.
    fn evaluate(&self, p: &Array2<f64>) -> (f64, Array2<f64>) {
        let a = self.order;
        let mut ratio_pow = Array2::zeros(p.dim());
        let mut excess = NeumaierSum::default();
        let mut cost = NeumaierSum::default();
        Zip::from(&mut ratio_pow).and(p).and(&self.t).and(self.m).for_each(|w, &pij, &tij, &mij| {
            cost.add(mij * pij);
            if tij > 0.0 {
                *w = (pij / tij).powf(a);
                excess.add(tij * (*w - 1.0));
            }
        });
        excess.add(self.t.sum() - 1.0);
        let excess = excess.value();
        let (divergence, scale) = if self.logarithmic {
            let info = 1.0 + excess;
            (excess.ln_1p() / (a - 1.0), self.epsilon * a / ((a - 1.0) * info))
        } else {
            (excess / (a - 1.0), self.epsilon * a / (a - 1.0))
        };
        let mut g = Array2::zeros(p.dim());
        Zip::from(&mut g).and(&ratio_pow).and(p).and(&self.t).and(self.m).for_each(|g, &w, &pij, &tij, &mij| {
            if tij > 0.0 {
                *g = mij + scale * w * tij / pij;
            }
        });
        let divergence = if self.nonnegative { divergence.max(0.0) } else { divergence };
        (cost.value() + self.epsilon * divergence, g)
    }
}

/// Outcome of the descent loop before packaging into a report.
pub(crate) struct Descent {
    pub plan: TransportPlan,
    pub objective: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
}

/// `Proj(P ⊙ exp(−η g))`, computed from log-weights with each row shifted
/// by its maximum (a diagonal factor the projection absorbs).
fn multiplicative_step(
    p: &Array2<f64>,
    g: &Array2<f64>,
    t: &Array2<f64>,
    eta: f64,
    r: &Histogram,
    c: &Histogram,
    inner: &SinkhornConfig,
    warm: Option<&[f64]>,
) -> Result<Scaled> {
    let mut log_x = Array2::from_elem(p.dim(), f64::NEG_INFINITY);
    Zip::from(&mut log_x).and(p).and(g).and(t).for_each(|lx, &pij, &gij, &tij| {
        if tij > 0.0 {
            *lx = pij.max(ENTRY_FLOOR).ln() - eta * gij;
        }
    });
    for mut row in log_x.rows_mut() {
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if max.is_finite() {
            row.mapv_inplace(|v| if v == f64::NEG_INFINITY { v } else { (v - max).max(MIN_EXPONENT) });
        }
    }
    if inner.log_domain {
        return scale_log_from(&log_x, r, c, inner, warm);
    }
    let x = log_x.mapv(f64::exp);
    match scale_linear_from(&x, r, c, inner, warm) {
        Err(OtError::NumericalUnderflow) | Err(OtError::MaxSweepsExceeded { .. }) => {
            scale_log_from(&log_x, r, c, inner, warm)
        }
        other => other,
    }
}

fn floor_support(p: &mut Array2<f64>, t: &Array2<f64>) {
    Zip::from(p).and(t).for_each(|pij, &tij| {
        if tij > 0.0 && *pij < ENTRY_FLOOR {
            *pij = ENTRY_FLOOR;
        }
    });
}

pub(crate) fn descend(
    objective: &PowerObjective,
    start: TransportPlan,
    t: &Array2<f64>,
    r: &Histogram,
    c: &Histogram,
    cfg: &MirrorDescentConfig,
) -> Result<Descent> {
    let tol = cfg.inner.marginal_tol;
    let mut p = start.entries().clone();
    floor_support(&mut p, t);
    let (mut f, mut g) = objective.evaluate(&p);
    let mut best = (p.clone(), f);
    let mut delta = match cfg.step_rule {
        StepRule::GeneralizedPolyak { delta0, .. } => delta0.unwrap_or(1e-2 * f.abs()).max(f64::MIN_POSITIVE),
        _ => 0.0,
    };
    let mut trace = vec![TraceRecord {
        iteration: 0,
        objective: f,
        step_size: 0.0,
        marginal_residual: start.marginal_residual(),
    }];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;
    let mut warm: Option<Vec<f64>> = None;
    for k in 1..=cfg.max_iters {
        let eta = match cfg.step_rule {
            StepRule::Constant { eta } => eta,
            StepRule::Normalized { theta } => theta / GradientNorm::Max.of(&g),
            StepRule::GeneralizedPolyak { c: c_const, norm, .. } => {
                match polyak_step_with(f, best.1 - delta, &g, c_const, norm) {
                    Ok(eta) => eta,
                    Err(OtError::ZeroGradient) => {
                        termination = Termination::IterateResidual;
                        break;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        if !(eta > 0.0 && eta.is_finite()) {
            termination = Termination::StepCollapse;
            break;
        }
        let scaled = multiplicative_step(&p, &g, t, eta, r, c, &cfg.inner, warm.as_deref()).map_err(|e| {
            OtError::InnerProjectionFailure {
                iteration: k,
                source: Box::new(e),
            }
        })?;
        let residual = scaled.residual;
        warm = Some(scaled.log_col_scaling);
        let mut next = scaled.plan;
        floor_support(&mut next, t);
        let (f_next, g_next) = objective.evaluate(&next);
        let diff = frobenius_distance(&next, &p);
        p = next;
        f = f_next;
        g = g_next;
        iterations = k;
        trace.push(TraceRecord {
            iteration: k,
            objective: f,
            step_size: eta,
            marginal_residual: residual,
        });
        if f < best.1 - delta {
            best = (p.clone(), f);
        } else {
            if f < best.1 {
                best = (p.clone(), f);
            }
            delta *= 0.5;
        }
        if diff <= cfg.iterate_tol {
            termination = Termination::IterateResidual;
            break;
        }
    }
    let (plan, objective_value) = match termination {
        Termination::IterateResidual if iterations > 0 => (p, f),
        _ => (best.0, best.1),
    };
    let plan = validate_plan(plan, r, c, tol.max(start.marginal_residual()))?;
    Ok(Descent {
        plan,
        objective: objective_value,
        iterations,
        trace,
        termination,
    })
}

fn frobenius_distance(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn check_problem(m: &CostMatrix, r: &Histogram, c: &Histogram, epsilon: f64) -> Result<()> {
    if r.len() != c.len() || m.n() != r.len() {
        return Err(OtError::ShapeMismatch {
            expected: (r.len(), c.len()),
            got: m.entries().dim(),
        });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(OtError::InvalidRegularizer(format!("epsilon must be positive, got {epsilon}")));
    }
    Ok(())
}

fn report(
    descent: Descent,
    m: &CostMatrix,
    spec: RegularizerSpec,
    divergence: impl Fn(&Array2<f64>) -> f64,
    start: Instant,
) -> SolveReport {
    let transport_cost = frobenius(m.entries(), descent.plan.entries());
    let divergence_value = divergence(descent.plan.entries());
    SolveReport {
        plan: descent.plan,
        regularizer: spec,
        objective_value: descent.objective,
        transport_cost,
        divergence_value,
        iterations: descent.iterations,
        trace: descent.trace,
        termination: descent.termination,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Minimizes `⟨M, P⟩ + ε R_α(P | r cᵀ)` over `U(r, c)` starting from `r cᵀ`.
pub fn renyi_mirror_descent(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
    cfg: &MirrorDescentConfig,
) -> Result<SolveReport> {
    renyi_mirror_descent_from(m, r, c, alpha, epsilon, cfg, TransportPlan::independent(r, c)?)
}

/// As [`renyi_mirror_descent`] from a given plan, which should be positive
/// on `supp(r cᵀ)`.
pub fn renyi_mirror_descent_from(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
    cfg: &MirrorDescentConfig,
    start: TransportPlan,
) -> Result<SolveReport> {
    let clock = Instant::now();
    check_alpha(alpha)?;
    check_problem(m, r, c, epsilon)?;
    cfg.validate()?;
    let spec = RegularizerSpec::renyi(alpha, epsilon)?;
    let t = outer(r, c);
    let objective = PowerObjective {
        m: m.entries(),
        t: t.clone(),
        order: alpha,
        epsilon,
        logarithmic: true,
        nonnegative: true,
    };
    let descent = descend(&objective, start, &t, r, c, cfg)?;
    Ok(report(
        descent,
        m,
        spec,
        |p| renyi_raw(&p.masses(), &t.masses(), alpha).value(),
        clock,
    ))
}

/// Minimizes `⟨M, P⟩ + ε D_q(P | r cᵀ)` over `U(r, c)` starting from `r cᵀ`.
pub fn tsallis_mirror_descent(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    q: f64,
    epsilon: f64,
    cfg: &MirrorDescentConfig,
) -> Result<SolveReport> {
    let clock = Instant::now();
    check_q(q)?;
    check_problem(m, r, c, epsilon)?;
    cfg.validate()?;
    let spec = RegularizerSpec::tsallis(q, epsilon)?;
    let t = outer(r, c);
    let objective = PowerObjective {
        m: m.entries(),
        t: t.clone(),
        order: q,
        epsilon,
        logarithmic: false,
        nonnegative: true,
    };
    let descent = descend(&objective, TransportPlan::independent(r, c)?, &t, r, c, cfg)?;
    Ok(report(
        descent,
        m,
        spec,
        |p| tsallis_raw(&p.masses(), &t.masses(), q).value(),
        clock,
    ))
}

/// Minimizes `⟨M, P⟩ − ε T_q(P)` over `U(r, c)`, with `T_q` the Tsallis
/// entropy of the plan, starting from `r cᵀ`.
pub fn tsallis_entropy_mirror_descent(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    q: f64,
    epsilon: f64,
    cfg: &MirrorDescentConfig,
) -> Result<SolveReport> {
    let clock = Instant::now();
    check_q(q)?;
    check_problem(m, r, c, epsilon)?;
    cfg.validate()?;
    let spec = RegularizerSpec::tsallis_entropy(q, epsilon)?;
    let t = outer(r, c);
    let support = t.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
    let objective = PowerObjective {
        m: m.entries(),
        t: support,
        order: q,
        epsilon,
        logarithmic: false,
        nonnegative: false,
    };
    let descent = descend(&objective, TransportPlan::independent(r, c)?, &t, r, c, cfg)?;
    Ok(report(
        descent,
        m,
        spec,
        |p| -tsallis_entropy(p, q).unwrap_or(f64::NAN),
        clock,
    ))
}
