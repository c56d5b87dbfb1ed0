//! Discrete Rényi, Tsallis and KL divergences, the Tsallis entropy, the
//! α-mutual information, and the regularized transport objectives with
//! their gradients.
//!
//! Zero conventions: `0·∞ = 0`, `0·ln 0 = 0`, `ln 0 = −∞`. Entries where the
//! first argument vanishes contribute nothing. For orders in `(0, 1)` entries
//! where only the reference vanishes contribute nothing as well, so the
//! divergence is infinite only when the two arguments have disjoint
//! supports. KL and Tsallis with `q > 1` are infinite as soon as the first
//! argument has mass outside the support of the second.

use std::borrow::Cow;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::error::{OtError, Result};
use crate::model::{check_alpha, check_q, frobenius, outer, CostMatrix, Histogram, TransportPlan};
use crate::numeric::NeumaierSum;

/// Anything that can be viewed as a vector of masses with a 2-D shape
/// (`(n, 1)` for vectors).
pub trait Masses {
    fn shape2(&self) -> (usize, usize);
    /// Masses in logical row-major order.
    fn masses(&self) -> Cow<'_, [f64]>;
}

impl Masses for [f64] {
    fn shape2(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self)
    }
}

impl Masses for Vec<f64> {
    fn shape2(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self)
    }
}

impl<const N: usize> Masses for [f64; N] {
    fn shape2(&self) -> (usize, usize) {
        (N, 1)
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self)
    }
}

impl Masses for Array1<f64> {
    fn shape2(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        match self.as_slice() {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(self.to_vec()),
        }
    }
}

impl Masses for Array2<f64> {
    fn shape2(&self) -> (usize, usize) {
        self.dim()
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        match self.as_slice() {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(self.iter().copied().collect()),
        }
    }
}

impl Masses for Histogram {
    fn shape2(&self) -> (usize, usize) {
        (self.len(), 1)
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        Cow::Borrowed(self.as_slice())
    }
}

impl Masses for TransportPlan {
    fn shape2(&self) -> (usize, usize) {
        self.entries().dim()
    }
    fn masses(&self) -> Cow<'_, [f64]> {
        self.entries().masses()
    }
}

/// A divergence value in nats, possibly `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceValue {
    value: f64,
    finite: bool,
}

impl DivergenceValue {
    pub fn finite(value: f64) -> Self {
        Self {
            value: value.max(0.0),
            finite: true,
        }
    }

    pub fn infinite() -> Self {
        Self {
            value: f64::INFINITY,
            finite: false,
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_finite(&self) -> bool {
        self.finite
    }
}

fn same_shape<'a, S: Masses + ?Sized, T: Masses + ?Sized>(
    s: &'a S,
    t: &'a T,
) -> Result<(Cow<'a, [f64]>, Cow<'a, [f64]>)> {
    if s.shape2() != t.shape2() {
        return Err(OtError::ShapeMismatch {
            expected: t.shape2(),
            got: s.shape2(),
        });
    }
    Ok((s.masses(), t.masses()))
}

/// `Σ_k s_k^a t_k^{1−a} − 1`, compensated, over entries where both are
/// positive. Also returns whether any term was positive.
fn power_sum_minus_one(s: &[f64], t: &[f64], a: f64) -> (f64, bool) {
    let mut acc = NeumaierSum::new(-1.0);
    let mut any = false;
    for (&sk, &tk) in s.iter().zip(t) {
        if sk > 0.0 && tk > 0.0 {
            any = true;
            acc.add(sk.powf(a) * tk.powf(1.0 - a));
        }
    }
    (acc.value(), any)
}

/// `R_α(s | t) = ln(Σ s^α t^{1−α}) / (α − 1)` for `α ∈ (0, 1)`.
pub fn renyi_divergence<S, T>(s: &S, t: &T, alpha: f64) -> Result<DivergenceValue>
where
    S: Masses + ?Sized,
    T: Masses + ?Sized,
{
    let (s, t) = same_shape(s, t)?;
    check_alpha(alpha)?;
    Ok(renyi_raw(&s, &t, alpha))
}

pub(crate) fn renyi_raw(s: &[f64], t: &[f64], alpha: f64) -> DivergenceValue {
    if s == t {
        return DivergenceValue::finite(0.0);
    }
    let (sum_minus_one, any) = power_sum_minus_one(s, t, alpha);
    if !any {
        return DivergenceValue::infinite();
    }
    DivergenceValue::finite(sum_minus_one.ln_1p() / (alpha - 1.0))
}

/// `D_q(s | t) = (Σ s^q t^{1−q} − 1) / (q − 1)` for `q > 0`, `q ≠ 1`.
pub fn tsallis_divergence<S, T>(s: &S, t: &T, q: f64) -> Result<DivergenceValue>
where
    S: Masses + ?Sized,
    T: Masses + ?Sized,
{
    let (s, t) = same_shape(s, t)?;
    check_q(q)?;
    Ok(tsallis_raw(&s, &t, q))
}

pub(crate) fn tsallis_raw(s: &[f64], t: &[f64], q: f64) -> DivergenceValue {
    if s == t {
        return DivergenceValue::finite(0.0);
    }
    if q > 1.0 && s.iter().zip(t).any(|(&sk, &tk)| sk > 0.0 && tk == 0.0) {
        return DivergenceValue::infinite();
    }
    let (sum_minus_one, _) = power_sum_minus_one(s, t, q);
    DivergenceValue::finite(sum_minus_one / (q - 1.0))
}

/// `KL(s | t) = Σ s ln(s / t)`.
pub fn kl_divergence<S, T>(s: &S, t: &T) -> Result<DivergenceValue>
where
    S: Masses + ?Sized,
    T: Masses + ?Sized,
{
    let (s, t) = same_shape(s, t)?;
    Ok(kl_raw(&s, &t))
}

pub(crate) fn kl_raw(s: &[f64], t: &[f64]) -> DivergenceValue {
    if s == t {
        return DivergenceValue::finite(0.0);
    }
    let mut acc = NeumaierSum::default();
    for (&sk, &tk) in s.iter().zip(t) {
        if sk > 0.0 {
            if tk == 0.0 {
                return DivergenceValue::infinite();
            }
            acc.add(sk * log_ratio(sk, tk));
        }
    }
    DivergenceValue::finite(acc.value())
}

/// `ln(a / b)` for positive `a, b`, accurate when the ratio is close to one.
#[inline]
pub(crate) fn log_ratio(a: f64, b: f64) -> f64 {
    let ratio = a / b;
    if (0.5..=2.0).contains(&ratio) {
        ((a - b) / b).ln_1p()
    } else {
        ratio.ln()
    }
}

/// `T_q(s) = (1 − Σ s^q) / (q − 1)`.
pub fn tsallis_entropy<S: Masses + ?Sized>(s: &S, q: f64) -> Result<f64> {
    check_q(q)?;
    let s = s.masses();
    let mut acc = NeumaierSum::new(1.0);
    for &sk in s.iter() {
        if sk > 0.0 {
            acc.add(-sk.powf(q));
        }
    }
    Ok(acc.value() / (q - 1.0))
}

fn check_plan_shape(p: &Array2<f64>, r: &Histogram, c: &Histogram) -> Result<()> {
    if p.dim() != (r.len(), c.len()) {
        return Err(OtError::ShapeMismatch {
            expected: (r.len(), c.len()),
            got: p.dim(),
        });
    }
    Ok(())
}

/// `I_α(P | r cᵀ) = Σ p_ij^α (r_i c_j)^{1−α}` over `supp(r cᵀ)`.
pub fn mutual_information_alpha(p: &Array2<f64>, r: &Histogram, c: &Histogram, alpha: f64) -> Result<f64> {
    check_plan_shape(p, r, c)?;
    check_alpha(alpha)?;
    let mut acc = NeumaierSum::default();
    for &i in r.support() {
        for &j in c.support() {
            let pij = p[[i, j]];
            if pij > 0.0 {
                acc.add(pij.powf(alpha) * (r.get(i) * c.get(j)).powf(1.0 - alpha));
            }
        }
    }
    Ok(acc.value())
}

fn check_cost(p: &Array2<f64>, m: &CostMatrix) -> Result<()> {
    if p.dim() != m.entries().dim() {
        return Err(OtError::ShapeMismatch {
            expected: m.entries().dim(),
            got: p.dim(),
        });
    }
    Ok(())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon >= 0.0 {
        Ok(())
    } else {
        Err(OtError::InvalidRegularizer(format!(
            "epsilon must be finite and nonnegative, got {epsilon}"
        )))
    }
}

/// `⟨M, P⟩ + ε R_α(P | r cᵀ)`.
///
/// `p` need not lie in `U(r, c)`; this lets finite differences probe the
/// objective off the polytope.
pub fn renyi_objective(
    p: &Array2<f64>,
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
) -> Result<f64> {
    check_plan_shape(p, r, c)?;
    check_cost(p, m)?;
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    let cost = frobenius(m.entries(), p);
    if epsilon == 0.0 {
        return Ok(cost);
    }
    let t = outer(r, c);
    Ok(cost + epsilon * renyi_raw(&p.masses(), &t.masses(), alpha).value())
}

/// `⟨M, P⟩ + ε D_q(P | r cᵀ)`.
pub fn tsallis_objective(
    p: &Array2<f64>,
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    q: f64,
    epsilon: f64,
) -> Result<f64> {
    check_plan_shape(p, r, c)?;
    check_cost(p, m)?;
    check_q(q)?;
    check_epsilon(epsilon)?;
    let cost = frobenius(m.entries(), p);
    if epsilon == 0.0 {
        return Ok(cost);
    }
    let t = outer(r, c);
    Ok(cost + epsilon * tsallis_raw(&p.masses(), &t.masses(), q).value())
}

/// `⟨M, P⟩ + ε KL(P | r cᵀ)`.
pub fn kl_objective(p: &Array2<f64>, m: &CostMatrix, r: &Histogram, c: &Histogram, epsilon: f64) -> Result<f64> {
    check_plan_shape(p, r, c)?;
    check_cost(p, m)?;
    check_epsilon(epsilon)?;
    let cost = frobenius(m.entries(), p);
    if epsilon == 0.0 {
        return Ok(cost);
    }
    let t = outer(r, c);
    Ok(cost + epsilon * kl_raw(&p.masses(), &t.masses()).value())
}

fn interior_check(p: &Array2<f64>, r: &Histogram, c: &Histogram) -> Result<()> {
    for &i in r.support() {
        for &j in c.support() {
            if !(p[[i, j]] > 0.0) {
                return Err(OtError::BoundaryPoint { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Gradient of the Rényi objective,
/// `M + ε α/(α−1) (r cᵀ ⊘ P)^{1−α} / ⟨P^α, (r cᵀ)^{1−α}⟩`, on `supp(r cᵀ)`;
/// zero elsewhere.
pub fn renyi_gradient(
    p: &Array2<f64>,
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    alpha: f64,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_plan_shape(p, r, c)?;
    check_cost(p, m)?;
    check_alpha(alpha)?;
    check_epsilon(epsilon)?;
    interior_check(p, r, c)?;
    let t = outer(r, c);
    Ok(renyi_gradient_unchecked(p, &t, m.entries(), alpha, epsilon))
}

/// Gradient for a strictly positive `p` on `supp(t)`. Entries off the support
/// are zero.
pub(crate) fn renyi_gradient_unchecked(
    p: &Array2<f64>,
    t: &Array2<f64>,
    m: &Array2<f64>,
    alpha: f64,
    epsilon: f64,
) -> Array2<f64> {
    let mut info = NeumaierSum::default();
    for (&pij, &tij) in p.iter().zip(t.iter()) {
        if tij > 0.0 {
            info.add(pij.powf(alpha) * tij.powf(1.0 - alpha));
        }
    }
    let scale = epsilon * alpha / (alpha - 1.0) / info.value();
    let mut g = Array2::zeros(p.dim());
    ndarray::Zip::from(&mut g)
        .and(p)
        .and(t)
        .and(m)
        .for_each(|g, &pij, &tij, &mij| {
            if tij > 0.0 {
                *g = mij + scale * (tij / pij).powf(1.0 - alpha);
            }
        });
    g
}

/// Gradient of the Tsallis objective, `M + ε q/(q−1) P^{q−1} (r cᵀ)^{1−q}`,
/// on `supp(r cᵀ)`; zero elsewhere.
pub fn tsallis_gradient(
    p: &Array2<f64>,
    m: &CostMatrix,
    r: &Histogram,
    c: &Histogram,
    q: f64,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_plan_shape(p, r, c)?;
    check_cost(p, m)?;
    check_q(q)?;
    check_epsilon(epsilon)?;
    if q < 1.0 {
        interior_check(p, r, c)?;
    }
    let t = outer(r, c);
    Ok(tsallis_gradient_unchecked(p, &t, m.entries(), q, epsilon))
}

pub(crate) fn tsallis_gradient_unchecked(
    p: &Array2<f64>,
    t: &Array2<f64>,
    m: &Array2<f64>,
    q: f64,
    epsilon: f64,
) -> Array2<f64> {
    let scale = epsilon * q / (q - 1.0);
    let mut g = Array2::zeros(p.dim());
    ndarray::Zip::from(&mut g)
        .and(p)
        .and(t)
        .and(m)
        .for_each(|g, &pij, &tij, &mij| {
            if tij > 0.0 {
                *g = mij + scale * (pij / tij).powf(q - 1.0);
            }
        });
    g
}
