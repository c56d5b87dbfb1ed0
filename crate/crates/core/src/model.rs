//! Validated data model shared by every solver: histograms, cost matrices,
//! transport plans, regularizer specifications and solve reports.
//!
//! All types are immutable once constructed. Matrices are dense and
//! row-major.

use ndarray::{Array1, Array2, Axis};
use serde::Serialize;

use crate::error::{OtError, Result};
use crate::numeric::NeumaierSum;

/// Inputs whose total mass deviates from 1 by more than this are rejected by
/// [`Histogram::new`] instead of being silently renormalized.
pub const MASS_DEVIATION_TOL: f64 = 1e-6;

/// Entries of a candidate plan down to this negative value are treated as
/// rounding noise and clamped to zero.
pub const NEGATIVE_ENTRY_TOL: f64 = 1e-15;

/// Maximum deviation of a validated plan's total mass from 1.
pub const PLAN_MASS_TOL: f64 = 1e-10;

/// A probability vector on `N` grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    weights: Array1<f64>,
    support: Vec<usize>,
}

impl Histogram {
    /// Builds a histogram from weights that already sum to one up to
    /// [`MASS_DEVIATION_TOL`]; the weights are renormalized exactly.
    pub fn new(weights: impl Into<Vec<f64>>) -> Result<Self> {
        let weights = weights.into();
        let total = check_masses(&weights)?;
        if (total - 1.0).abs() > MASS_DEVIATION_TOL {
            return Err(OtError::MassDeviation {
                total,
                tol: MASS_DEVIATION_TOL,
            });
        }
        Ok(Self::normalized(weights, total))
    }

    /// The uniform histogram on `n` points.
    pub fn uniform(n: usize) -> Result<Self> {
        histogram_from_samples(&vec![1.0; n])
    }

    fn normalized(mut weights: Vec<f64>, total: f64) -> Self {
        weights.iter_mut().for_each(|w| *w /= total);
        let support = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, _)| i)
            .collect();
        Self {
            weights: Array1::from(weights),
            support,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn as_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("histogram storage is contiguous")
    }

    /// Indices with strictly positive weight, in increasing order.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// Smallest strictly positive weight.
    pub fn min_positive(&self) -> f64 {
        self.support
            .iter()
            .map(|&i| self.weights[i])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Normalizes nonnegative values into a [`Histogram`].
pub fn histogram_from_samples(values: &[f64]) -> Result<Histogram> {
    let total = check_masses(values)?;
    Ok(Histogram::normalized(values.to_vec(), total))
}

fn check_masses(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(OtError::EmptyInput);
    }
    let mut total = NeumaierSum::default();
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            return Err(OtError::NonFinite { index });
        }
        if value < 0.0 {
            return Err(OtError::NegativeMass { index, value });
        }
        total.add(value);
    }
    let total = total.value();
    if total <= 0.0 {
        return Err(OtError::ZeroTotalMass);
    }
    Ok(total)
}

/// Outer product `r cᵀ`, the independent coupling.
pub fn outer(r: &Histogram, c: &Histogram) -> Array2<f64> {
    let rc = r.weights().view().insert_axis(Axis(1));
    let cc = c.weights().view().insert_axis(Axis(0));
    &rc * &cc
}

/// Square matrix of nonnegative transport costs.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    symmetric: bool,
}

impl CostMatrix {
    /// Validates nonnegativity and finiteness; the symmetry flag is detected
    /// exactly.
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (n, m) = entries.dim();
        if n != m {
            return Err(OtError::ShapeMismatch {
                expected: (n, n),
                got: (n, m),
            });
        }
        if n == 0 {
            return Err(OtError::EmptyInput);
        }
        for ((row, col), &v) in entries.indexed_iter() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OtError::InvalidCost { row, col });
            }
        }
        let symmetric = is_symmetric(&entries);
        Ok(Self { entries, symmetric })
    }

    /// Like [`CostMatrix::new`] but fails unless the matrix is exactly
    /// symmetric.
    pub fn new_symmetric(entries: Array2<f64>) -> Result<Self> {
        let cost = Self::new(entries)?;
        if !cost.symmetric {
            let n = cost.n();
            for i in 0..n {
                for j in 0..i {
                    if cost.entries[[i, j]] != cost.entries[[j, i]] {
                        return Err(OtError::AsymmetricCost { row: i, col: j });
                    }
                }
            }
        }
        Ok(cost)
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        Self::new(Array2::from_shape_fn((n, n), |(i, j)| f(i, j)))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every entry by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(OtError::InvalidConfig(format!(
                "cost scale must be positive, got {factor}"
            )));
        }
        Self::new(&self.entries * factor)
    }

    pub fn transposed(&self) -> Self {
        Self {
            entries: self.entries.t().as_standard_layout().into_owned(),
            symmetric: self.symmetric,
        }
    }
}

fn is_symmetric(a: &Array2<f64>) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..i).all(|j| a[[i, j]] == a[[j, i]]))
}

/// Frobenius inner product.
pub fn frobenius(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut acc = NeumaierSum::default();
    for (x, y) in a.iter().zip(b.iter()) {
        acc.add(x * y);
    }
    acc.value()
}

/// `sqrt(‖P·1 − r‖² + ‖Pᵀ·1 − c‖²)`.
pub fn marginal_residual(p: &Array2<f64>, r: &Histogram, c: &Histogram) -> f64 {
    let rows = p.sum_axis(Axis(1));
    let cols = p.sum_axis(Axis(0));
    let dr: f64 = rows
        .iter()
        .zip(r.weights())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let dc: f64 = cols
        .iter()
        .zip(c.weights())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    (dr + dc).sqrt()
}

/// A nonnegative matrix with total mass one whose marginals match `(r, c)`
/// up to the tolerance it was validated at.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
    row_marginal: Histogram,
    col_marginal: Histogram,
    marginal_residual: f64,
    tolerance: f64,
}

impl TransportPlan {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> Array2<f64> {
        self.entries
    }

    pub fn row_marginal(&self) -> &Histogram {
        &self.row_marginal
    }

    pub fn col_marginal(&self) -> &Histogram {
        &self.col_marginal
    }

    pub fn marginal_residual(&self) -> f64 {
        self.marginal_residual
    }

    /// Tolerance the plan was validated against.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// The independent coupling `r cᵀ`.
    pub fn independent(r: &Histogram, c: &Histogram) -> Result<Self> {
        validate_plan(outer(r, c), r, c, PLAN_MASS_TOL)
    }

    /// Transposed plan, a coupling of `(c, r)`.
    pub fn transposed(&self) -> Self {
        Self {
            entries: self.entries.t().as_standard_layout().into_owned(),
            row_marginal: self.col_marginal.clone(),
            col_marginal: self.row_marginal.clone(),
            marginal_residual: self.marginal_residual,
            tolerance: self.tolerance,
        }
    }

    /// Largest absolute entrywise difference to another matrix.
    pub fn max_abs_diff(&self, other: &Array2<f64>) -> f64 {
        self.entries
            .iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Accepts `p` as an element of `U(r, c)`.
///
/// Entries in `[-1e-15, 0)` are clamped to zero. The plan must carry no mass
/// outside `supp(r cᵀ)`, its total mass must be one within
/// [`PLAN_MASS_TOL`] and its marginal residual at most `tol`.
pub fn validate_plan(
    mut p: Array2<f64>,
    r: &Histogram,
    c: &Histogram,
    tol: f64,
) -> Result<TransportPlan> {
    let n = r.len();
    if c.len() != n || p.dim() != (n, n) {
        return Err(OtError::ShapeMismatch {
            expected: (r.len(), c.len()),
            got: p.dim(),
        });
    }
    if !(tol > 0.0) {
        return Err(OtError::InvalidConfig(format!(
            "validation tolerance must be positive, got {tol}"
        )));
    }
    for ((row, col), v) in p.indexed_iter_mut() {
        if !v.is_finite() {
            return Err(OtError::NonFinite { index: row * n + col });
        }
        if *v < 0.0 {
            if *v < -NEGATIVE_ENTRY_TOL {
                return Err(OtError::NegativeEntry {
                    row,
                    col,
                    value: *v,
                });
            }
            *v = 0.0;
        }
        if *v > 0.0 && r.get(row) * c.get(col) == 0.0 {
            return Err(OtError::SupportViolation {
                row,
                col,
                value: *v,
            });
        }
    }
    let residual = marginal_residual(&p, r, c);
    if residual > tol {
        return Err(OtError::MarginalViolation { residual, tol });
    }
    let total = p.sum();
    if (total - 1.0).abs() > PLAN_MASS_TOL {
        return Err(OtError::MassDeviation {
            total,
            tol: PLAN_MASS_TOL,
        });
    }
    Ok(TransportPlan {
        entries: p,
        row_marginal: r.clone(),
        col_marginal: c.clone(),
        marginal_residual: residual,
        tolerance: tol,
    })
}

/// Which divergence regularizes the transport problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegularizerKind {
    Renyi { alpha: f64 },
    /// Tsallis divergence to `r cᵀ`.
    Tsallis { q: f64 },
    /// Negative Tsallis entropy `−T_q(P)` of the plan itself.
    TsallisEntropy { q: f64 },
    Kl,
    None,
}

/// A regularizer together with its strength ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegularizerSpec {
    kind: RegularizerKind,
    epsilon: f64,
}

impl RegularizerSpec {
    pub fn new(kind: RegularizerKind, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(OtError::InvalidRegularizer(format!(
                "epsilon must be finite and nonnegative, got {epsilon}"
            )));
        }
        match kind {
            RegularizerKind::Renyi { alpha } => check_alpha(alpha)?,
            RegularizerKind::Tsallis { q } | RegularizerKind::TsallisEntropy { q } => check_q(q)?,
            RegularizerKind::Kl => {}
            RegularizerKind::None => {
                if epsilon != 0.0 {
                    return Err(OtError::InvalidRegularizer(
                        "unregularized transport requires epsilon = 0".into(),
                    ));
                }
            }
        }
        Ok(Self { kind, epsilon })
    }

    pub fn renyi(alpha: f64, epsilon: f64) -> Result<Self> {
        Self::new(RegularizerKind::Renyi { alpha }, epsilon)
    }

    pub fn tsallis(q: f64, epsilon: f64) -> Result<Self> {
        Self::new(RegularizerKind::Tsallis { q }, epsilon)
    }

    pub fn tsallis_entropy(q: f64, epsilon: f64) -> Result<Self> {
        Self::new(RegularizerKind::TsallisEntropy { q }, epsilon)
    }

    pub fn kl(epsilon: f64) -> Result<Self> {
        Self::new(RegularizerKind::Kl, epsilon)
    }

    pub fn unregularized() -> Self {
        Self {
            kind: RegularizerKind::None,
            epsilon: 0.0,
        }
    }

    pub fn kind(&self) -> RegularizerKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Short human-readable label such as `renyi(alpha=0.01, eps=0.1)`.
    pub fn label(&self) -> String {
        match self.kind {
            RegularizerKind::Renyi { alpha } => format!("renyi(alpha={alpha}, eps={})", self.epsilon),
            RegularizerKind::Tsallis { q } => format!("tsallis(q={q}, eps={})", self.epsilon),
            RegularizerKind::TsallisEntropy { q } => format!("tsallis-entropy(q={q}, eps={})", self.epsilon),
            RegularizerKind::Kl => format!("kl(eps={})", self.epsilon),
            RegularizerKind::None => "none".to_string(),
        }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(OtError::AlphaOutOfRange(alpha))
    }
}

pub(crate) fn check_q(q: f64) -> Result<()> {
    if q.is_finite() && q > 0.0 && q != 1.0 {
        Ok(())
    } else {
        Err(OtError::QOutOfRange(q))
    }
}

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Successive iterates (or the marginal residual, for Sinkhorn-type
    /// solvers) fell below the configured tolerance.
    IterateResidual,
    MaxIterations,
    /// The step size collapsed before an admissible step was found.
    StepCollapse,
}

/// One recorded iteration of a solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub objective: f64,
    pub step_size: f64,
    pub marginal_residual: f64,
}

/// Result of a regularized or exact transport solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub plan: TransportPlan,
    pub regularizer: RegularizerSpec,
    pub objective_value: f64,
    /// `⟨M, P⟩`.
    pub transport_cost: f64,
    pub divergence_value: f64,
    pub iterations: usize,
    pub trace: Vec<TraceRecord>,
    pub termination: Termination,
    /// Seconds.
    pub wall_time: f64,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.termination == Termination::IterateResidual
    }

    pub fn epsilon(&self) -> f64 {
        self.regularizer.epsilon()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn normalizes_samples() {
        let h = histogram_from_samples(&[2.0, 2.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.5, 0.5]);
        let h = histogram_from_samples(&[1.0, 0.0, 3.0]).unwrap();
        assert_eq!(h.as_slice(), &[0.25, 0.0, 0.75]);
        assert_eq!(h.support(), &[0, 2]);
    }

    #[test]
    fn rejects_bad_samples() {
        assert_eq!(histogram_from_samples(&[]), Err(OtError::EmptyInput));
        assert!(matches!(
            histogram_from_samples(&[0.3, -0.1]),
            Err(OtError::NegativeMass { index: 1, .. })
        ));
        assert_eq!(histogram_from_samples(&[0.0, 0.0]), Err(OtError::ZeroTotalMass));
        assert!(matches!(
            histogram_from_samples(&[f64::NAN]),
            Err(OtError::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn new_accepts_small_deviation_only() {
        let h = Histogram::new(vec![0.5, 0.5 + 5e-7]).unwrap();
        assert!((h.weights().sum() - 1.0).abs() < 1e-12);
        assert!(matches!(
            Histogram::new(vec![0.5, 0.6]),
            Err(OtError::MassDeviation { .. })
        ));
    }

    #[test]
    fn independent_plan_is_valid() {
        let r = Histogram::new(vec![0.2, 0.3, 0.5]).unwrap();
        let c = Histogram::new(vec![0.6, 0.0, 0.4]).unwrap();
        let plan = validate_plan(outer(&r, &c), &r, &c, 1e-14).unwrap();
        assert!(plan.marginal_residual() < 1e-15);
        assert_eq!(plan.entries()[[1, 1]], 0.0);
    }

    #[test]
    fn diagonal_plan_is_valid() {
        let h = Histogram::uniform(2).unwrap();
        let plan = validate_plan(array![[0.5, 0.0], [0.0, 0.5]], &h, &h, 1e-12).unwrap();
        assert_eq!(plan.marginal_residual(), 0.0);
    }

    #[test]
    fn marginal_violation_detected() {
        let h = Histogram::uniform(2).unwrap();
        let err = validate_plan(array![[1.0, 0.0], [0.0, 0.0]], &h, &h, 1e-4).unwrap_err();
        assert!(matches!(err, OtError::MarginalViolation { .. }));
    }

    #[test]
    fn negative_and_support_violations() {
        let h = Histogram::uniform(2).unwrap();
        let err = validate_plan(array![[0.5, 1e-3], [-1e-3, 0.5]], &h, &h, 1.0).unwrap_err();
        assert!(matches!(err, OtError::NegativeEntry { row: 1, col: 0, .. }));

        let plan = validate_plan(array![[0.5, -1e-16], [0.0, 0.5]], &h, &h, 1e-12).unwrap();
        assert_eq!(plan.entries()[[0, 1]], 0.0);

        let r = Histogram::new(vec![1.0, 0.0]).unwrap();
        let err = validate_plan(array![[0.5, 0.0], [0.5, 0.0]], &r, &h, 10.0).unwrap_err();
        assert!(matches!(err, OtError::SupportViolation { row: 1, col: 0, .. }));
    }

    #[test]
    fn shape_mismatch() {
        let h = Histogram::uniform(2).unwrap();
        let err = validate_plan(Array2::zeros((3, 3)), &h, &h, 1.0).unwrap_err();
        assert!(matches!(err, OtError::ShapeMismatch { .. }));
    }

    #[test]
    fn regularizer_invariants() {
        assert!(RegularizerSpec::renyi(0.5, 1.0).is_ok());
        assert_eq!(
            RegularizerSpec::renyi(1.5, 1.0),
            Err(OtError::AlphaOutOfRange(1.5))
        );
        assert_eq!(RegularizerSpec::tsallis(1.0, 1.0), Err(OtError::QOutOfRange(1.0)));
        assert!(RegularizerSpec::tsallis(1.6, 0.1).is_ok());
        assert!(RegularizerSpec::kl(-1.0).is_err());
        assert!(RegularizerSpec::new(RegularizerKind::None, 0.5).is_err());
        assert_eq!(RegularizerSpec::unregularized().epsilon(), 0.0);
    }

    #[test]
    fn cost_matrix_checks() {
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(m.is_symmetric());
        let m = CostMatrix::new(array![[0.0, 1.0], [2.0, 0.0]]).unwrap();
        assert!(!m.is_symmetric());
        assert!(CostMatrix::new_symmetric(array![[0.0, 1.0], [2.0, 0.0]]).is_err());
        assert!(CostMatrix::new(array![[0.0, -1.0], [1.0, 0.0]]).is_err());
        assert!(CostMatrix::new(Array2::zeros((2, 3))).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn masses() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.0f64..10.0, 1..40)
                .prop_filter("positive total", |v| v.iter().any(|&x| x > 0.0))
        }

        proptest! {
            #[test]
            fn histograms_sum_to_one(v in masses()) {
                let h = histogram_from_samples(&v).unwrap();
                prop_assert!((h.weights().sum() - 1.0).abs() <= 1e-12);
                let expected: Vec<usize> = v.iter().enumerate().filter(|(_, &x)| x > 0.0).map(|(i, _)| i).collect();
                prop_assert_eq!(h.support(), &expected[..]);
            }

            #[test]
            fn independent_coupling_always_validates(
                (a, b) in (2usize..12).prop_flat_map(|n| (
                    prop::collection::vec(0.0f64..1.0, n),
                    prop::collection::vec(0.0f64..1.0, n),
                )).prop_filter("positive", |(a, b)| a.iter().any(|&x| x > 0.0) && b.iter().any(|&x| x > 0.0)),
                tol in 1e-12f64..1.0,
            ) {
                let r = histogram_from_samples(&a).unwrap();
                let c = histogram_from_samples(&b).unwrap();
                let plan = validate_plan(outer(&r, &c), &r, &c, tol).unwrap();
                prop_assert!(plan.marginal_residual() <= tol);
            }
        }
    }
}
