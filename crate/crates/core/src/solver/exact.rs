//! Unregularized transport by the transportation simplex method.
//!
//! The basis is a spanning tree on the bipartite graph of rows and columns,
//! started from the north-west corner rule. Entering cells are chosen by the
//! most negative reduced cost; after a run of degenerate pivots the solver
//! switches to Bland's lowest-index rule until a pivot moves mass again.

use std::collections::VecDeque;
use std::time::Instant;

use ndarray::Array2;

use crate::error::{OtError, Result};
use crate::model::{frobenius, validate_plan, CostMatrix, Histogram, RegularizerSpec, SolveReport, Termination};

const DEGENERATE_RUN_BEFORE_BLAND: usize = 50;

/// Basis of `n + m − 1` cells with their current flows.
struct Basis {
    rows: usize,
    cols: usize,
    cells: Vec<(usize, usize)>,
    flow: Array2<f64>,
    basic: Array2<bool>,
}

impl Basis {
    fn north_west(r: &[f64], c: &[f64]) -> Self {
        let (rows, cols) = (r.len(), c.len());
        let mut supply = r.to_vec();
        let mut demand = c.to_vec();
        let mut flow = Array2::zeros((rows, cols));
        let mut basic = Array2::from_elem((rows, cols), false);
        let mut cells = Vec::with_capacity(rows + cols - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            let x = supply[i].min(demand[j]);
            flow[[i, j]] = x;
            basic[[i, j]] = true;
            cells.push((i, j));
            supply[i] -= x;
            demand[j] -= x;
            if i + 1 == rows && j + 1 == cols {
                break;
            }
            // Advance past the exhausted side; on a tie only one index moves,
            // leaving a degenerate zero cell that keeps the basis a tree.
            if j + 1 == cols || (i + 1 < rows && supply[i] <= demand[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self {
            rows,
            cols,
            cells,
            flow,
            basic,
        }
    }

    /// Node ids: rows are `0..rows`, columns `rows..rows + cols`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.rows + self.cols];
        for (k, &(i, j)) in self.cells.iter().enumerate() {
            adj[i].push((self.rows + j, k));
            adj[self.rows + j].push((i, k));
        }
        adj
    }

    /// Dual potentials with `u_0 = 0` and `u_i + v_j = m_ij` on basic cells.
    fn potentials(&self, m: &Array2<f64>, adj: &[Vec<(usize, usize)>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.rows + self.cols];
        let mut queue = VecDeque::from([0]);
        pot[0] = 0.0;
        while let Some(node) = queue.pop_front() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j) = self.cells[k];
                    pot[next] = m[[i, j]] - pot[node];
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.rows);
        (pot, v)
    }

    /// Cells on the tree path from row `i` to column `j`, in order.
    fn path(&self, adj: &[Vec<(usize, usize)>], i: usize, j: usize) -> Vec<usize> {
        let target = self.rows + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.rows + self.cols];
        let mut seen = vec![false; self.rows + self.cols];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    queue.push_back(next);
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = target;
        while let Some((prev, k)) = parent[node] {
            cells.push(k);
            node = prev;
        }
        cells.reverse();
        cells
    }
}

/// Final flow of a simplex run.
struct SimplexOutcome {
    flow: Array2<f64>,
    pivots: usize,
    optimal: bool,
}

fn transportation_simplex(m: &Array2<f64>, r: &[f64], c: &[f64], max_pivots: usize) -> SimplexOutcome {
    let mut basis = Basis::north_west(r, c);
    let scale = m.iter().fold(1.0_f64, |a, &b| a.max(b.abs()));
    let tol = 1e-12 * scale;
    let mut degenerate_run = 0;
    for pivot in 0..max_pivots {
        let adj = basis.adjacency();
        let (u, v) = basis.potentials(m, &adj);
        let bland = degenerate_run >= DEGENERATE_RUN_BEFORE_BLAND;
        let mut entering: Option<((usize, usize), f64)> = None;
        'scan: for i in 0..basis.rows {
            for j in 0..basis.cols {
                if basis.basic[[i, j]] {
                    continue;
                }
                let reduced = m[[i, j]] - u[i] - v[j];
                if reduced < -tol && entering.is_none_or(|(_, best)| reduced < best) {
                    entering = Some(((i, j), reduced));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some(((ei, ej), _)) = entering else {
            return SimplexOutcome {
                flow: basis.flow,
                pivots: pivot,
                optimal: true,
            };
        };
        // Cycle: entering cell (+), then path cells alternating −, +, ...
        let path = basis.path(&adj, ei, ej);
        let mut leave: Option<(usize, f64)> = None;
        for &k in path.iter().rev().step_by(2) {
            let x = basis.flow[basis.cells[k]];
            let better = match leave {
                None => true,
                Some((lk, lx)) => x < lx || (x == lx && bland && basis.cells[k] < basis.cells[lk]),
            };
            if better {
                leave = Some((k, x));
            }
        }
        let (leave_k, theta) = leave.expect("cycle contains a decreasing cell");
        for (step, &k) in path.iter().rev().enumerate() {
            let cell = basis.cells[k];
            if step % 2 == 0 {
                basis.flow[cell] = (basis.flow[cell] - theta).max(0.0);
            } else {
                basis.flow[cell] += theta;
            }
        }
        basis.flow[[ei, ej]] = theta;
        let (li, lj) = basis.cells[leave_k];
        basis.flow[[li, lj]] = 0.0;
        basis.basic[[li, lj]] = false;
        basis.basic[[ei, ej]] = true;
        basis.cells[leave_k] = (ei, ej);
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
    }
    SimplexOutcome {
        flow: basis.flow,
        pivots: max_pivots,
        optimal: false,
    }
}

/// Solves `min_{P ∈ U(r, c)} ⟨M, P⟩` exactly (up to floating point).
pub fn exact_ot(m: &CostMatrix, r: &Histogram, c: &Histogram) -> Result<SolveReport> {
    let start = Instant::now();
    let n = r.len();
    if c.len() != n || m.n() != n {
        return Err(OtError::ShapeMismatch {
            expected: (n, n),
            got: m.entries().dim(),
        });
    }
    let max_pivots = 50 * n * n + 1000;
    let outcome = transportation_simplex(m.entries(), r.as_slice(), c.as_slice(), max_pivots);
    let mut flow = outcome.flow;
    // Floating drift in the north-west sweep can leave ~1e-17 mass on cells
    // whose marginal is zero.
    for i in 0..n {
        for j in 0..n {
            if r.get(i) == 0.0 || c.get(j) == 0.0 {
                flow[[i, j]] = 0.0;
            }
        }
    }
    let plan = validate_plan(flow, r, c, 1e-9)?;
    let cost = frobenius(m.entries(), plan.entries());
    Ok(SolveReport {
        plan,
        regularizer: RegularizerSpec::unregularized(),
        objective_value: cost,
        transport_cost: cost,
        divergence_value: 0.0,
        iterations: outcome.pivots,
        trace: Vec::new(),
        termination: if outcome.optimal {
            Termination::IterateResidual
        } else {
            Termination::MaxIterations
        },
        wall_time: start.elapsed().as_secs_f64(),
    })
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
    fn identity_cost_zero_on_diagonal() {
        let r = h(&[0.5, 0.5]);
        let m = CostMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let rep = exact_ot(&m, &r, &r).unwrap();
        assert_eq!(rep.transport_cost, 0.0);
        assert_eq!(rep.plan.entries(), &array![[0.5, 0.0], [0.0, 0.5]]);
        assert!(rep.converged());
    }

    #[test]
    fn shifted_mass() {
        let r = h(&[1.0, 0.0, 0.0]);
        let c = h(&[0.0, 0.0, 1.0]);
        let m = CostMatrix::from_fn(3, |i, j| (i as f64 - j as f64).powi(2)).unwrap();
        let rep = exact_ot(&m, &r, &c).unwrap();
        assert_eq!(rep.transport_cost, 4.0);
    }

    #[test]
    fn monotone_coupling_for_convex_cost() {
        let r = h(&[0.1, 0.2, 0.3, 0.4]);
        let c = h(&[0.4, 0.3, 0.2, 0.1]);
        let m = CostMatrix::from_fn(4, |i, j| (i as f64 - j as f64).powi(2)).unwrap();
        let rep = exact_ot(&m, &r, &c).unwrap();
        // North-west corner is the monotone (optimal) coupling here.
        let nw = array![[0.1, 0.0, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0], [0.1, 0.2, 0.0, 0.0], [0.0, 0.1, 0.2, 0.1]];
        assert!(rep.plan.max_abs_diff(&nw) < 1e-15);
    }

    #[test]
    fn anti_diagonal_cost() {
        let r = h(&[0.5, 0.5]);
        let m = CostMatrix::new(array![[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let rep = exact_ot(&m, &r, &r).unwrap();
        assert_eq!(rep.transport_cost, 0.0);
        assert_eq!(rep.plan.entries(), &array![[0.0, 0.5], [0.5, 0.0]]);
    }
}
