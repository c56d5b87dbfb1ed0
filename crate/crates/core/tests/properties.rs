mod common;

use ndarray::Array2;
use proptest::prelude::*;
use renyi_ot::experiments::{build_cost_matrix, convergence_sweep, CostFamily, SolverSettings};
use renyi_ot::solver::{exact_ot, renyi_mirror_descent, MirrorDescentConfig};
use renyi_ot::{
    kl_divergence, outer, renyi_divergence, sinkhorn_project, tsallis_divergence, CostMatrix, Histogram,
    SinkhornConfig,
};

fn weights(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    })
}

fn pair(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2..=max_n).prop_flat_map(|n| (weights(n), weights(n)))
}

fn instance(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2..=max_n).prop_flat_map(|n| (weights(n), weights(n), prop::collection::vec(0.0f64..1.0, n * n)))
}

fn cost(n: usize, entries: Vec<f64>) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_vec((n, n), entries).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn divergences_nonnegative_and_ordered((s, t) in pair(12), a in 0.01f64..0.99) {
        let r = renyi_divergence(&s, &t, a).unwrap().value();
        let ts = tsallis_divergence(&s, &t, a).unwrap().value();
        prop_assert!(r >= 0.0 && ts >= 0.0);
        prop_assert!(kl_divergence(&s, &t).unwrap().value() >= 0.0);
        prop_assert!(r >= ts);
        prop_assert!(renyi_divergence(&s, &s, a).unwrap().value().abs() < 1e-14);
    }

    #[test]
    fn renyi_increases_with_order((s, t) in pair(12), a in 0.01f64..0.5, b in 0.5f64..0.99) {
        let lo = renyi_divergence(&s, &t, a).unwrap().value();
        let hi = renyi_divergence(&s, &t, b).unwrap().value();
        prop_assert!(lo <= hi + 1e-14);
        prop_assert!(hi <= kl_divergence(&s, &t).unwrap().value() + 1e-14);
    }

    #[test]
    fn projection_is_feasible((r, c, k) in instance(20)) {
        let n = r.len();
        let (r, c) = (Histogram::new(r).unwrap(), Histogram::new(c).unwrap());
        let kernel = Array2::from_shape_vec((n, n), k.into_iter().map(|x| x + 1e-3).collect()).unwrap();
        let plan = sinkhorn_project(&kernel, &r, &c, &SinkhornConfig::default()).unwrap();
        prop_assert!(plan.marginal_residual() <= 1e-4);
        prop_assert!(plan.entries().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn exact_cost_bounds((r, c, m) in instance(8)) {
        let n = r.len();
        let (r, c) = (Histogram::new(r).unwrap(), Histogram::new(c).unwrap());
        let m = cost(n, m);
        let exact = exact_ot(&m, &r, &c).unwrap();
        let independent: f64 = (m.entries() * &outer(&r, &c)).sum();
        prop_assert!(exact.transport_cost <= independent + 1e-12);
        prop_assert!(exact.plan.marginal_residual() <= 1e-9);
        let swapped = exact_ot(&m.transposed(), &c, &r).unwrap();
        prop_assert!((swapped.transport_cost - exact.transport_cost).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn regularized_value_sandwiched((r, c, m) in instance(6), alpha in 0.05f64..0.95, eps in 0.01f64..1.0) {
        let n = r.len();
        let (r, c) = (Histogram::new(r).unwrap(), Histogram::new(c).unwrap());
        let m = cost(n, m);
        let rep = renyi_mirror_descent(&m, &r, &c, alpha, eps, &MirrorDescentConfig::default()).unwrap();
        let exact = exact_ot(&m, &r, &c).unwrap().transport_cost;
        let independent: f64 = (m.entries() * &outer(&r, &c)).sum();
        let slack = 1e-3 * (1.0 + m.max_entry());
        prop_assert!(rep.objective_value >= exact - slack);
        prop_assert!(rep.objective_value <= independent + slack);
        prop_assert!(rep.transport_cost >= exact - slack);
    }
}

#[test]
fn sweep_is_reproducible() {
    let n = 8;
    let mut rng = common::rng(5);
    let r = common::random_histogram(&mut rng, n);
    let c = common::random_histogram(&mut rng, n);
    let m = build_cost_matrix(&CostFamily::SqEuclidUnscaled, n).unwrap();
    let run = || convergence_sweep(&m, &r, &c, &[0.1, 0.5], &[0.1, 1.0], &SolverSettings::default()).unwrap();
    let a = format!("{:?}", run());
    let b = format!("{:?}", run());
    assert_eq!(a, b);
}
