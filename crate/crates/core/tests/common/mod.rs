#![allow(dead_code)]

use astro_float::{BigFloat, Consts, Radix, RoundingMode};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use renyi_ot::{CostMatrix, Histogram};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive weights bounded away from zero, normalized.
pub fn positive_weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

pub fn random_histogram(rng: &mut impl Rng, n: usize) -> Histogram {
    Histogram::new(positive_weights(rng, n)).unwrap()
}

/// Squared Euclidean distances between uniform points in the unit square.
pub fn random_sq_euclid(rng: &mut impl Rng, n: usize) -> CostMatrix {
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
    CostMatrix::from_fn(n, |i, j| (pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).unwrap()
}

/// Uniform random entries in `[0, 1)`, not necessarily symmetric.
pub fn random_cost(rng: &mut impl Rng, n: usize) -> CostMatrix {
    CostMatrix::new(Array2::from_shape_fn((n, n), |_| rng.random::<f64>())).unwrap()
}

/// `|x_i − x_j|` on the grid `k/(n−1)`.
pub fn grid_distance(n: usize) -> CostMatrix {
    CostMatrix::from_fn(n, |i, j| (i as f64 - j as f64).abs() / (n - 1) as f64).unwrap()
}

/// Reference values of the three divergences computed with 192-bit floats.
pub struct Oracle {
    cc: Consts,
}

const BITS: usize = 192;
const RM: RoundingMode = RoundingMode::ToEven;

impl Oracle {
    pub fn new() -> Self {
        Self { cc: Consts::new().unwrap() }
    }

    fn to_f64(&mut self, x: &BigFloat) -> f64 {
        x.format(Radix::Dec, RM, &mut self.cc).unwrap().parse().unwrap()
    }

    fn big(x: f64) -> BigFloat {
        BigFloat::from_f64(x, BITS)
    }

    /// `Σ s^a t^{1−a}` together with `Σ s ln(s/t)`, summed exactly.
    fn sums(&mut self, s: &[f64], t: &[f64], a: f64) -> (BigFloat, BigFloat) {
        let a_big = Self::big(a);
        let one_minus = Self::big(1.0).sub(&a_big, BITS, RM);
        let mut power = Self::big(0.0);
        let mut kl = Self::big(0.0);
        for (&si, &ti) in s.iter().zip(t) {
            if si == 0.0 {
                continue;
            }
            let ls = Self::big(si).ln(BITS, RM, &mut self.cc);
            let lt = Self::big(ti).ln(BITS, RM, &mut self.cc);
            let e = a_big.mul(&ls, BITS, RM).add(&one_minus.mul(&lt, BITS, RM), BITS, RM);
            power = power.add(&e.exp(BITS, RM, &mut self.cc), BITS, RM);
            kl = kl.add(&Self::big(si).mul(&ls.sub(&lt, BITS, RM), BITS, RM), BITS, RM);
        }
        (power, kl)
    }

    /// `(Rényi_a, Tsallis_a, KL)` of `s` against a positive `t`.
    pub fn divergences(&mut self, s: &[f64], t: &[f64], a: f64) -> (f64, f64, f64) {
        let (power, kl) = self.sums(s, t, a);
        let denom = Self::big(a - 1.0);
        let renyi = power.ln(BITS, RM, &mut self.cc).div(&denom, BITS, RM);
        let tsallis = power.sub(&Self::big(1.0), BITS, RM).div(&denom, BITS, RM);
        (self.to_f64(&renyi), self.to_f64(&tsallis), self.to_f64(&kl))
    }
}

/// Minimum of `⟨M, P⟩` over all basic feasible solutions of the
/// transportation problem, found by trying every spanning tree of the
/// bipartite row/column graph as a basis.
pub fn brute_force_ot(m: &CostMatrix, r: &[f64], c: &[f64]) -> f64 {
    let n = r.len();
    let cells: Vec<(usize, usize)> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let k = 2 * n - 1;
    let mut best = f64::INFINITY;
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        let basis: Vec<(usize, usize)> = idx.iter().map(|&i| cells[i]).collect();
        if let Some(flow) = tree_flow(&basis, r, c) {
            if flow.iter().all(|&f| f >= -1e-14) {
                let cost: f64 = basis.iter().zip(&flow).map(|(&(i, j), f)| m.entries()[[i, j]] * f).sum();
                best = best.min(cost);
            }
        }
        // next combination in lexicographic order
        let mut pos = k;
        while pos > 0 && idx[pos - 1] == cells.len() - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            return best;
        }
        idx[pos - 1] += 1;
        for q in pos..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

/// Flows on a spanning-tree basis by peeling leaves; `None` if the cells
/// contain a cycle.
fn tree_flow(basis: &[(usize, usize)], r: &[f64], c: &[f64]) -> Option<Vec<f64>> {
    let n = r.len();
    let mut parent: Vec<usize> = (0..2 * n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut x = x;
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in basis {
        let (a, b) = (find(&mut parent, i), find(&mut parent, n + j));
        if a == b {
            return None;
        }
        parent[a] = b;
    }
    let mut supply: Vec<f64> = r.iter().chain(c).copied().collect();
    let mut degree = vec![0usize; 2 * n];
    for &(i, j) in basis {
        degree[i] += 1;
        degree[n + j] += 1;
    }
    let mut flow = vec![f64::NAN; basis.len()];
    let mut done = vec![false; basis.len()];
    for _ in 0..basis.len() {
        let (e, leaf) = basis
            .iter()
            .enumerate()
            .filter(|(e, _)| !done[*e])
            .find_map(|(e, &(i, j))| {
                if degree[i] == 1 {
                    Some((e, i))
                } else if degree[n + j] == 1 {
                    Some((e, n + j))
                } else {
                    None
                }
            })?;
        let (i, j) = basis[e];
        let other = if leaf == i { n + j } else { i };
        flow[e] = supply[leaf];
        supply[other] -= supply[leaf];
        supply[leaf] = 0.0;
        degree[i] -= 1;
        degree[n + j] -= 1;
        done[e] = true;
    }
    Some(flow)
}
