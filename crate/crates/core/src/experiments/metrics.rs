//! Entrywise comparison of two transport plans.

use serde::Serialize;

use crate::divergence::{kl_raw, Masses};
use crate::error::{OtError, Result};
use crate::model::{frobenius, CostMatrix, TransportPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorMetrics {
    /// Mean of `|p_ij − p̂_ij|`.
    pub abs_mean: f64,
    /// Population standard deviation of `|p_ij − p̂_ij|`.
    pub abs_std: f64,
    /// `KL(P | P_ref)`, infinite when `P` has mass where `P_ref` has none.
    pub kl_error: f64,
    pub mse: f64,
    /// `⟨M, P⟩`.
    pub transport_distance: f64,
}

pub fn plan_error_metrics(p: &TransportPlan, p_ref: &TransportPlan, m: &CostMatrix) -> Result<ErrorMetrics> {
    let (a, b) = (p.entries(), p_ref.entries());
    if a.dim() != b.dim() || m.entries().dim() != a.dim() {
        return Err(OtError::ShapeMismatch {
            expected: b.dim(),
            got: a.dim(),
        });
    }
    let count = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).collect();
    let abs_mean = diffs.iter().sum::<f64>() / count;
    let abs_var = diffs.iter().map(|d| (d - abs_mean).powi(2)).sum::<f64>() / count;
    let mse = diffs.iter().map(|d| d * d).sum::<f64>() / count;
    Ok(ErrorMetrics {
        abs_mean,
        abs_std: abs_var.sqrt(),
        kl_error: kl_raw(&a.masses(), &b.masses()).value(),
        mse,
        transport_distance: frobenius(m.entries(), a),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{histogram_from_samples, validate_plan};
    use ndarray::array;

    #[test]
    fn identical_plans_have_zero_error() {
        let r = histogram_from_samples(&[0.3, 0.7]).unwrap();
        let p = TransportPlan::independent(&r, &r).unwrap();
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let e = plan_error_metrics(&p, &p, &m).unwrap();
        assert_eq!((e.abs_mean, e.abs_std, e.kl_error, e.mse), (0.0, 0.0, 0.0, 0.0));
        assert!((e.transport_distance - 0.42).abs() < 1e-15);
    }

    #[test]
    fn independent_against_diagonal() {
        let r = histogram_from_samples(&[0.5, 0.5]).unwrap();
        let p = TransportPlan::independent(&r, &r).unwrap();
        let diag = validate_plan(array![[0.5, 0.0], [0.0, 0.5]], &r, &r, 1e-12).unwrap();
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let e = plan_error_metrics(&p, &diag, &m).unwrap();
        assert_eq!(e.abs_mean, 0.25);
        assert_eq!(e.abs_std, 0.0);
        assert_eq!(e.mse, 0.0625);
        assert_eq!(e.kl_error, f64::INFINITY);
        let back = plan_error_metrics(&diag, &p, &m).unwrap();
        assert!((back.kl_error - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let r2 = histogram_from_samples(&[0.5, 0.5]).unwrap();
        let r3 = histogram_from_samples(&[1.0, 1.0, 1.0]).unwrap();
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let a = TransportPlan::independent(&r2, &r2).unwrap();
        let b = TransportPlan::independent(&r3, &r3).unwrap();
        assert!(matches!(plan_error_metrics(&a, &b, &m), Err(OtError::ShapeMismatch { .. })));
    }
}
