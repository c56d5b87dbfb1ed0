//! KL projection onto the transport polytope `U(r, c)` by alternating
//! diagonal scaling, and the KL-regularized transport baseline built on the
//! same machinery.

use std::time::Instant;

use ndarray::{Array1, Array2};

use crate::divergence::{kl_raw, Masses};
use crate::error::{OtError, Result};
use crate::model::{
    frobenius, marginal_residual, outer, validate_plan, CostMatrix, Histogram, RegularizerSpec, SolveReport,
    Termination, TraceRecord, TransportPlan, PLAN_MASS_TOL,
};
use crate::numeric::log_sum_exp;

/// Stopping rule of the scaling iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Stop once `sqrt(‖P1 − r‖² + ‖Pᵀ1 − c‖²)` is at most this.
    pub marginal_tol: f64,
    pub max_sweeps: usize,
    /// Run the scalings on log-potentials with log-sum-exp reductions.
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            marginal_tol: 1e-4,
            max_sweeps: 10_000,
            log_domain: false,
        }
    }
}

impl SinkhornConfig {
    /// Configuration for the KL baseline: the log domain is switched on for
    /// `epsilon <= 1e-2`, where `exp(-M/ε)` loses too much range.
    pub fn for_kl_baseline(epsilon: f64) -> Self {
        Self {
            log_domain: epsilon <= 1e-2,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.marginal_tol > 0.0) {
            return Err(OtError::InvalidConfig(format!(
                "marginal_tol must be positive, got {}",
                self.marginal_tol
            )));
        }
        if self.max_sweeps == 0 {
            return Err(OtError::InvalidConfig("max_sweeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of a scaling run before validation.
#[derive(Debug, Clone)]
pub(crate) struct Scaled {
    pub plan: Array2<f64>,
    pub residual: f64,
    pub sweeps: usize,
    /// Logarithms of the final column scalings, `-inf` on zero columns.
    pub log_col_scaling: Vec<f64>,
}

fn check_inputs(x: &Array2<f64>, r: &Histogram, c: &Histogram) -> Result<()> {
    if r.len() != c.len() || x.dim() != (r.len(), c.len()) {
        return Err(OtError::ShapeMismatch {
            expected: (r.len(), c.len()),
            got: x.dim(),
        });
    }
    Ok(())
}

/// Zeroes every entry outside `supp(r cᵀ)` and checks that each supported
/// row and column keeps some positive entry.
fn masked_kernel(x: &Array2<f64>, r: &Histogram, c: &Histogram) -> Result<Array2<f64>> {
    let mut k = Array2::zeros(x.dim());
    for &i in r.support() {
        for &j in c.support() {
            let v = x[[i, j]];
            if v < 0.0 || v.is_nan() {
                return Err(OtError::NegativeEntry { row: i, col: j, value: v });
            }
            k[[i, j]] = v;
        }
    }
    feasibility(&k, r, c, |v| v > 0.0)?;
    Ok(k)
}

fn feasibility(k: &Array2<f64>, r: &Histogram, c: &Histogram, positive: impl Fn(f64) -> bool) -> Result<()> {
    for &i in r.support() {
        if !c.support().iter().any(|&j| positive(k[[i, j]])) {
            return Err(OtError::InfeasibleKernel { axis: "row", index: i });
        }
    }
    for &j in c.support() {
        if !r.support().iter().any(|&i| positive(k[[i, j]])) {
            return Err(OtError::InfeasibleKernel { axis: "column", index: j });
        }
    }
    Ok(())
}

fn already_feasible(k: &Array2<f64>, r: &Histogram, c: &Histogram, tol: f64) -> Option<f64> {
    let residual = marginal_residual(k, r, c);
    (residual <= tol && (k.sum() - 1.0).abs() <= PLAN_MASS_TOL).then_some(residual)
}

/// Linear-domain scaling of a nonnegative kernel. Returns
/// [`OtError::NumericalUnderflow`] when a scaling factor stops being finite.
pub(crate) fn scale_linear(x: &Array2<f64>, r: &Histogram, c: &Histogram, cfg: &SinkhornConfig) -> Result<Scaled> {
    scale_linear_from(x, r, c, cfg, None)
}

/// [`scale_linear`] starting from given log column scalings.
pub(crate) fn scale_linear_from(
    x: &Array2<f64>,
    r: &Histogram,
    c: &Histogram,
    cfg: &SinkhornConfig,
    log_v0: Option<&[f64]>,
) -> Result<Scaled> {
    let k = masked_kernel(x, r, c)?;
    let n = r.len();
    if let Some(residual) = already_feasible(&k, r, c, cfg.marginal_tol) {
        return Ok(Scaled {
            plan: k,
            residual,
            sweeps: 0,
            log_col_scaling: (0..n).map(|j| if c.get(j) > 0.0 { 0.0 } else { f64::NEG_INFINITY }).collect(),
        });
    }
    let rw = r.weights();
    let cw = c.weights();
    let mut u = Array1::<f64>::zeros(n);
    let mut v = Array1::<f64>::from_shape_fn(n, |j| match (cw[j] > 0.0, log_v0) {
        (false, _) => 0.0,
        (true, Some(lv)) if lv[j].exp().is_normal() => lv[j].exp(),
        (true, _) => 1.0,
    });
    let mut kv = k.dot(&v);
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        for i in 0..n {
            u[i] = if rw[i] > 0.0 { rw[i] / kv[i] } else { 0.0 };
        }
        let ktu = k.t().dot(&u);
        for j in 0..n {
            v[j] = if cw[j] > 0.0 { cw[j] / ktu[j] } else { 0.0 };
        }
        if !(u.iter().all(|x| x.is_finite()) && v.iter().all(|x| x.is_finite())) {
            return Err(OtError::NumericalUnderflow);
        }
        kv = k.dot(&v);
        // Column sums are exact after the column update; only rows can miss.
        residual = (0..n).map(|i| (u[i] * kv[i] - rw[i]).powi(2)).sum::<f64>().sqrt();
        if !residual.is_finite() {
            return Err(OtError::NumericalUnderflow);
        }
        if residual <= cfg.marginal_tol {
            return Ok(Scaled {
                plan: scaled_plan(&k, &u, &v),
                residual,
                sweeps: sweep,
                log_col_scaling: v.iter().map(|x| x.ln()).collect(),
            });
        }
    }
    Err(OtError::MaxSweepsExceeded {
        sweeps: cfg.max_sweeps,
        residual,
        best: Box::new(scaled_plan(&k, &u, &v)),
    })
}

fn scaled_plan(k: &Array2<f64>, u: &Array1<f64>, v: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn(k.dim(), |(i, j)| u[i] * k[[i, j]] * v[j])
}

/// Log-domain scaling of a log-kernel (`-inf` marks zero entries).
pub(crate) fn scale_log(log_x: &Array2<f64>, r: &Histogram, c: &Histogram, cfg: &SinkhornConfig) -> Result<Scaled> {
    scale_log_from(log_x, r, c, cfg, None)
}

/// [`scale_log`] starting from given log column scalings.
pub(crate) fn scale_log_from(
    log_x: &Array2<f64>,
    r: &Histogram,
    c: &Histogram,
    cfg: &SinkhornConfig,
    log_v0: Option<&[f64]>,
) -> Result<Scaled> {
    let n = r.len();
    let mut lk = Array2::from_elem(log_x.dim(), f64::NEG_INFINITY);
    for &i in r.support() {
        for &j in c.support() {
            let v = log_x[[i, j]];
            if v.is_nan() || v == f64::INFINITY {
                return Err(OtError::NonFinite { index: i * n + j });
            }
            lk[[i, j]] = v;
        }
    }
    feasibility(&lk, r, c, |v| v > f64::NEG_INFINITY)?;
    let log_r: Vec<f64> = r.weights().iter().map(|w| w.ln()).collect();
    let log_c: Vec<f64> = c.weights().iter().map(|w| w.ln()).collect();

    let exp_plan = |a: &[f64], b: &[f64]| Array2::from_shape_fn((n, n), |(i, j)| (lk[[i, j]] + a[i] + b[j]).exp());
    let zeros = vec![0.0; n];
    let start = exp_plan(&zeros, &zeros);
    if let Some(residual) = already_feasible(&start, r, c, cfg.marginal_tol) {
        return Ok(Scaled {
            plan: start,
            residual,
            sweeps: 0,
            log_col_scaling: zeros,
        });
    }

    let mut a = vec![0.0; n];
    let mut b: Vec<f64> = match log_v0 {
        Some(lv) => lv.iter().map(|&x| if x.is_finite() { x } else { 0.0 }).collect(),
        None => vec![0.0; n],
    };
    let mut row_lse = row_log_sums(&lk, &b);
    let mut residual = f64::INFINITY;
    for sweep in 1..=cfg.max_sweeps {
        for i in 0..n {
            a[i] = if r.get(i) > 0.0 { log_r[i] - row_lse[i] } else { f64::NEG_INFINITY };
        }
        for j in 0..n {
            b[j] = if c.get(j) > 0.0 {
                log_c[j] - log_sum_exp((0..n).map(|i| lk[[i, j]] + a[i]))
            } else {
                f64::NEG_INFINITY
            };
        }
        row_lse = row_log_sums(&lk, &b);
        residual = (0..n)
            .map(|i| {
                let row = if r.get(i) > 0.0 { (a[i] + row_lse[i]).exp() } else { 0.0 };
                (row - r.get(i)).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if !residual.is_finite() {
            return Err(OtError::NumericalUnderflow);
        }
        if residual <= cfg.marginal_tol {
            return Ok(Scaled {
                plan: exp_plan(&a, &b),
                residual,
                sweeps: sweep,
                log_col_scaling: b,
            });
        }
    }
    Err(OtError::MaxSweepsExceeded {
        sweeps: cfg.max_sweeps,
        residual,
        best: Box::new(exp_plan(&a, &b)),
    })
}

fn row_log_sums(lk: &Array2<f64>, b: &[f64]) -> Vec<f64> {
    lk.rows()
        .into_iter()
        .map(|row| log_sum_exp(row.iter().zip(b).map(|(&l, &bj)| l + bj)))
        .collect()
}

/// `argmin_{P ∈ U(r, c)} KL(P | X)` by alternating row and column scaling,
/// starting from unit scalings. Rows and columns with zero marginal are
/// frozen at zero.
pub fn sinkhorn_project(x: &Array2<f64>, r: &Histogram, c: &Histogram, cfg: &SinkhornConfig) -> Result<TransportPlan> {
    cfg.validate()?;
    check_inputs(x, r, c)?;
    let scaled = if cfg.log_domain {
        let log_x = x.mapv(f64::ln);
        scale_log(&log_x, r, c, cfg)?
    } else {
        scale_linear(x, r, c, cfg)?
    };
    validate_plan(scaled.plan, r, c, cfg.marginal_tol)
}

/// Solves `min_{P ∈ U(r, c)} ⟨M, P⟩ + ε KL(P | r cᵀ)` by scaling the kernel
/// `r cᵀ ⊙ exp(−M/ε)`.
pub fn kl_regularized_ot(
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    epsilon: f64,
    cfg: &SinkhornConfig,
) -> Result<SolveReport> {
    let start = Instant::now();
    cfg.validate()?;
    let spec = RegularizerSpec::kl(epsilon)?;
    if epsilon == 0.0 {
        return Err(OtError::InvalidRegularizer("KL baseline requires epsilon > 0".into()));
    }
    check_inputs(m.entries(), r, c)?;
    let t = outer(r, c);
    let scaled = if cfg.log_domain {
        let log_k = Array2::from_shape_fn(t.dim(), |(i, j)| t[[i, j]].ln() - m.entries()[[i, j]] / epsilon);
        scale_log(&log_k, r, c, cfg)?
    } else {
        let k = Array2::from_shape_fn(t.dim(), |(i, j)| t[[i, j]] * (-m.entries()[[i, j]] / epsilon).exp());
        if feasibility(&k, r, c, |v| v > 0.0).is_err() {
            return Err(OtError::NumericalUnderflow);
        }
        scale_linear(&k, r, c, cfg)?
    };
    let plan = validate_plan(scaled.plan, r, c, cfg.marginal_tol)?;
    let transport_cost = frobenius(m.entries(), plan.entries());
    let divergence = kl_raw(&plan.masses(), &t.masses()).value();
    let objective = transport_cost + epsilon * divergence;
    Ok(SolveReport {
        trace: vec![TraceRecord {
            iteration: scaled.sweeps,
            objective,
            step_size: f64::NAN,
            marginal_residual: scaled.residual,
        }],
        plan,
        regularizer: spec,
        objective_value: objective,
        transport_cost,
        divergence_value: divergence,
        iterations: scaled.sweeps,
        termination: Termination::IterateResidual,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::kl_divergence;
    use crate::model::histogram_from_samples;
    use ndarray::array;

    fn h(v: &[f64]) -> Histogram {
        histogram_from_samples(v).unwrap()
    }

    #[test]
    fn independent_coupling_needs_no_sweeps() {
        let r = h(&[0.2, 0.3, 0.5]);
        let c = h(&[0.6, 0.1, 0.3]);
        let t = outer(&r, &c);
        let s = scale_linear(&t, &r, &c, &SinkhornConfig::default()).unwrap();
        assert_eq!(s.sweeps, 0);
        assert_eq!(s.plan, t);
        let p = sinkhorn_project(&t, &r, &c, &SinkhornConfig::default()).unwrap();
        assert_eq!(p.entries(), &t);
    }

    #[test]
    fn diagonal_dominant_kernel_meets_tolerance() {
        let r = h(&[0.5, 0.5]);
        for log_domain in [false, true] {
            let cfg = SinkhornConfig {
                log_domain,
                ..Default::default()
            };
            let p = sinkhorn_project(&array![[5.0, 1.0], [0.5, 3.0]], &r, &r, &cfg).unwrap();
            assert!(p.marginal_residual() <= 1e-4);
        }
    }

    #[test]
    fn constant_kernel_projects_to_independent_coupling() {
        let r = h(&[0.3, 0.7]);
        let c = h(&[0.6, 0.4]);
        let p = sinkhorn_project(&array![[1.0, 1.0], [1.0, 1.0]], &r, &c, &SinkhornConfig::default()).unwrap();
        assert!(p.max_abs_diff(&outer(&r, &c)) < 1e-12);
    }

    // U(r, c) for N = 2 is the segment P(x) = [[x, r0 − x], [c0 − x, 1 − r0 − c0 + x]].
    fn segment(r0: f64, c0: f64) -> (f64, f64) {
        ((r0 + c0 - 1.0).max(0.0), r0.min(c0))
    }

    fn generalized_kl(p: &Array2<f64>, x: &Array2<f64>) -> f64 {
        p.iter()
            .zip(x.iter())
            .map(|(&a, &b)| if a > 0.0 { a * (a / b).ln() - a + b } else { b })
            .sum()
    }

    #[test]
    fn constant_kernel_matches_grid_minimizer() {
        let (r0, c0) = (0.3, 0.6);
        let r = h(&[r0, 1.0 - r0]);
        let c = h(&[c0, 1.0 - c0]);
        let x = array![[1.0, 1.0], [1.0, 1.0]];
        let (lo, hi) = segment(r0, c0);
        let steps = 100_000;
        let best = (0..=steps)
            .map(|k| lo + (hi - lo) * k as f64 / steps as f64)
            .map(|v| (v, generalized_kl(&array![[v, r0 - v], [c0 - v, 1.0 - r0 - c0 + v]], &x)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let p = sinkhorn_project(&x, &r, &c, &SinkhornConfig::default()).unwrap();
        assert!((p.entries()[[0, 0]] - best.0).abs() < 1e-4);
        assert!((best.0 - r0 * c0).abs() < 1e-5);
    }

    #[test]
    fn zero_marginals_stay_zero() {
        let r = h(&[0.5, 0.0, 0.5]);
        let c = h(&[0.2, 0.8, 0.0]);
        let x = Array2::from_elem((3, 3), 1.0);
        for log_domain in [false, true] {
            let cfg = SinkhornConfig {
                log_domain,
                ..Default::default()
            };
            let p = sinkhorn_project(&x, &r, &c, &cfg).unwrap();
            assert!(p.entries().row(1).iter().all(|&v| v == 0.0));
            assert!(p.entries().column(2).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn infeasible_kernel_detected() {
        let r = h(&[0.5, 0.5]);
        let x = array![[1.0, 1.0], [0.0, 0.0]];
        let err = sinkhorn_project(&x, &r, &r, &SinkhornConfig::default()).unwrap_err();
        assert_eq!(err, OtError::InfeasibleKernel { axis: "row", index: 1 });
    }

    #[test]
    fn max_sweeps_reports_best_iterate() {
        let r = h(&[0.5, 0.5]);
        let c = h(&[0.1, 0.9]);
        let cfg = SinkhornConfig {
            marginal_tol: 1e-14,
            max_sweeps: 1,
            log_domain: false,
        };
        match sinkhorn_project(&array![[9.0, 1e-3], [1e-3, 9.0]], &r, &c, &cfg) {
            Err(OtError::MaxSweepsExceeded { sweeps, residual, best }) => {
                assert_eq!(sweeps, 1);
                assert!(residual > 1e-14);
                assert_eq!(best.dim(), (2, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn kl_baseline_large_epsilon_is_independent() {
        let r = h(&[0.2, 0.5, 0.3]);
        let c = h(&[0.4, 0.4, 0.2]);
        let m = CostMatrix::from_fn(3, |i, j| (i as f64 - j as f64).powi(2)).unwrap();
        let rep = kl_regularized_ot(&m, &r, &c, 1e6, &SinkhornConfig::default()).unwrap();
        assert!(rep.plan.max_abs_diff(&outer(&r, &c)) < 1e-6);
        let kl = kl_divergence(rep.plan.entries(), &outer(&r, &c)).unwrap().value();
        assert!((rep.divergence_value - kl).abs() < 1e-15);
    }

    #[test]
    fn kl_baseline_sandwich() {
        let r = h(&[0.5, 0.5]);
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let rep = kl_regularized_ot(&m, &r, &r, 0.1, &SinkhornConfig::default()).unwrap();
        assert!(rep.objective_value < 0.5 && rep.objective_value > 0.0);
        let rep = kl_regularized_ot(&m, &r, &r, 1e-3, &SinkhornConfig::for_kl_baseline(1e-3)).unwrap();
        assert!(rep.transport_cost < 1e-2);
    }

    #[test]
    fn linear_domain_underflow_is_reported() {
        let r = h(&[0.5, 0.5]);
        let m = CostMatrix::new(array![[1.0, 1.0], [1.0, 1.0]]).unwrap();
        let cfg = SinkhornConfig::default();
        assert_eq!(kl_regularized_ot(&m, &r, &r, 1e-4, &cfg).unwrap_err(), OtError::NumericalUnderflow);
        let log_cfg = SinkhornConfig {
            log_domain: true,
            ..cfg
        };
        assert!(kl_regularized_ot(&m, &r, &r, 1e-4, &log_cfg).is_ok());
    }
}
