//! The `γ`-ball premetric: the cheapest plan whose Rényi divergence from
//! `r cᵀ` is at most `γ`, found as a Rényi-regularized plan whose `ε` is
//! tuned by bisection until the constraint is active.

use std::time::Instant;

use crate::divergence::{renyi_raw, Masses};
use crate::error::{OtError, Result};
use crate::model::{check_alpha, frobenius, outer, CostMatrix, Histogram, RegularizerSpec, SolveReport, Termination, TransportPlan};
use crate::solver::exact::exact_ot;
use crate::solver::mirror::{renyi_mirror_descent, MirrorDescentConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PremetricConfig {
    pub solver: MirrorDescentConfig,
    /// Bisection bracket on `ε`, searched in log scale.
    pub eps_low: f64,
    pub eps_high: f64,
    pub max_bisections: usize,
    /// Accept once `|R_α(P_ε | r cᵀ) − γ|` is at most this.
    pub divergence_tol: f64,
}

impl Default for PremetricConfig {
    fn default() -> Self {
        Self {
            solver: MirrorDescentConfig::default(),
            eps_low: 1e-8,
            eps_high: 1e8,
            max_bisections: 60,
            divergence_tol: 1e-4,
        }
    }
}

/// Returns the report of the minimizing plan together with the multiplier
/// `ε*`: `0` when the exact plan already lies in the ball, `+∞` for `γ = 0`.
pub fn premetric_ball_solve(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    gamma: f64,
    cfg: &PremetricConfig,
) -> Result<(SolveReport, f64)> {
    let clock = Instant::now();
    check_alpha(alpha)?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(OtError::InvalidConfig(format!("gamma must be nonnegative, got {gamma}")));
    }
    if !(cfg.eps_low > 0.0 && cfg.eps_low < cfg.eps_high && cfg.divergence_tol > 0.0) {
        return Err(OtError::InvalidConfig("invalid bisection bracket or tolerance".into()));
    }
    let t = outer(r, c);
    let divergence = |p: &TransportPlan| renyi_raw(&p.masses(), &t.masses(), alpha).value();

    if gamma == 0.0 {
        let plan = TransportPlan::independent(r, c)?;
        let cost = frobenius(m.entries(), plan.entries());
        let report = SolveReport {
            plan,
            regularizer: RegularizerSpec::unregularized(),
            objective_value: cost,
            transport_cost: cost,
            divergence_value: 0.0,
            iterations: 0,
            trace: Vec::new(),
            termination: Termination::IterateResidual,
            wall_time: clock.elapsed().as_secs_f64(),
        };
        return Ok((report, f64::INFINITY));
    }

    let mut exact = exact_ot(m, r, c)?;
    let exact_divergence = divergence(&exact.plan);
    if gamma >= exact_divergence {
        exact.divergence_value = exact_divergence;
        return Ok((exact, 0.0));
    }

    let solve = |eps: f64| -> Result<(SolveReport, f64)> {
        let report = renyi_mirror_descent(m, r, c, alpha, eps, &cfg.solver)?;
        let d = report.divergence_value;
        Ok((report, d))
    };
    let (mut lo, mut hi) = (cfg.eps_low.ln(), cfg.eps_high.ln());
    let (low_report, d_low) = solve(cfg.eps_low)?;
    if (d_low - gamma).abs() <= cfg.divergence_tol {
        return Ok((low_report, cfg.eps_low));
    }
    let (high_report, d_high) = solve(cfg.eps_high)?;
    if (d_high - gamma).abs() <= cfg.divergence_tol {
        return Ok((high_report, cfg.eps_high));
    }
    // The divergence of the regularized plan decreases as ε grows.
    if !(d_low > gamma && gamma > d_high) {
        return Err(OtError::BisectionFailure {
            gamma,
            low: d_low,
            high: d_high,
        });
    }
    let mut best = (low_report, d_low, cfg.eps_low);
    for _ in 0..cfg.max_bisections {
        let mid = 0.5 * (lo + hi);
        let eps = mid.exp();
        let (report, d) = solve(eps)?;
        let closer = (d - gamma).abs() < (best.1 - gamma).abs();
        if d > gamma {
            lo = mid;
        } else {
            hi = mid;
        }
        if closer {
            best = (report, d, eps);
        }
        if (best.1 - gamma).abs() <= cfg.divergence_tol {
            break;
        }
    }
    if (best.1 - gamma).abs() > cfg.divergence_tol {
        return Err(OtError::BisectionFailure {
            gamma,
            low: lo.exp(),
            high: hi.exp(),
        });
    }
    let (mut report, _, eps) = best;
    report.wall_time = clock.elapsed().as_secs_f64();
    Ok((report, eps))
}
