//! Wasserstein and generalized Wasserstein distances between atomic
//! measures.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lp::{solve_standard, LpOutcome};
use crate::measures::{AtomicMeasure, Point};

/// Moving mass further than this is never cheaper than destroying and
/// recreating it.
pub const COST_CAP: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroundNorm {
    #[default]
    L2,
    Linf,
    L1,
}

impl GroundNorm {
    pub fn dist(&self, a: &Point, b: &Point) -> f64 {
        let dt = (a.t - b.t).abs();
        let ds = (a.s - b.s).abs();
        match self {
            GroundNorm::L2 => libm::hypot(dt, ds),
            GroundNorm::Linf => dt.max(ds),
            GroundNorm::L1 => dt + ds,
        }
    }
}

/// Coupling between the atoms of two measures plus the unmatched mass.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    /// Row-major `n1 × n2` coupling.
    pub coupling: Vec<f64>,
    pub n1: usize,
    pub n2: usize,
    /// Mass of each atom of the first measure that is not transported.
    pub destroyed: Vec<f64>,
    /// Mass of each atom of the second measure that is not transported.
    pub created: Vec<f64>,
    pub objective: f64,
}

impl TransportPlan {
    pub fn gamma(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.n2 + j]
    }

    pub fn transported_mass(&self) -> f64 {
        self.coupling.iter().sum()
    }

    pub fn destroyed_mass(&self) -> f64 {
        self.destroyed.iter().sum()
    }

    pub fn created_mass(&self) -> f64 {
        self.created.iter().sum()
    }

    /// Largest violation of the marginal identities.
    pub fn marginal_error(&self, x1: &AtomicMeasure, x2: &AtomicMeasure) -> f64 {
        let mut err: f64 = 0.0;
        for (i, a) in x1.atoms().iter().enumerate() {
            let row: f64 = (0..self.n2).map(|j| self.gamma(i, j)).sum();
            err = err.max((row + self.destroyed[i] - a.weight).abs());
        }
        for (j, b) in x2.atoms().iter().enumerate() {
            let col: f64 = (0..self.n1).map(|i| self.gamma(i, j)).sum();
            err = err.max((col + self.created[j] - b.weight).abs());
        }
        err
    }
}

fn cost_matrix(x1: &AtomicMeasure, x2: &AtomicMeasure, norm: GroundNorm, cap: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(x1.len() * x2.len());
    for a in x1.atoms() {
        for b in x2.atoms() {
            c.push(norm.dist(&a.loc, &b.loc).min(cap));
        }
    }
    c
}

/// Earth mover's distance between measures of equal mass.
pub fn wasserstein(
    x1: &AtomicMeasure,
    x2: &AtomicMeasure,
    norm: GroundNorm,
) -> Result<(f64, TransportPlan)> {
    let (m1, m2) = (x1.tv_norm(), x2.tv_norm());
    if (m1 - m2).abs() > 1e-9 {
        return Err(Error::UnequalMass { a: m1, b: m2 });
    }
    let (n1, n2) = (x1.len(), x2.len());
    if n1 == 0 || n2 == 0 {
        let plan = TransportPlan {
            coupling: vec![0.0; n1 * n2],
            n1,
            n2,
            destroyed: x1.weights(),
            created: x2.weights(),
            objective: 0.0,
        };
        return Ok((0.0, plan));
    }
    let cost = cost_matrix(x1, x2, norm, f64::INFINITY);
    let mut supply = x1.weights();
    let mut demand = x2.weights();
    // Absorb a rounding-level mass gap so the problem is exactly balanced.
    let gap = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    let (mut destroyed, mut created) = (vec![0.0; n1], vec![0.0; n2]);
    if gap > 0.0 {
        supply[n1 - 1] -= gap;
        destroyed[n1 - 1] = gap;
    } else if gap < 0.0 {
        demand[n2 - 1] += gap;
        created[n2 - 1] = -gap;
    }
    let flow = transport_simplex(&supply, &demand, &cost);
    let objective: f64 = flow.iter().zip(&cost).map(|(f, c)| f * c).sum();
    Ok((
        objective,
        TransportPlan {
            coupling: flow,
            n1,
            n2,
            destroyed,
            created,
            objective,
        },
    ))
}

/// Generalized Wasserstein distance: transport with ground cost capped at
/// 2, plus unit cost per unit of destroyed or created mass.
pub fn gen_wasserstein(
    x1: &AtomicMeasure,
    x2: &AtomicMeasure,
    norm: GroundNorm,
) -> (f64, TransportPlan) {
    let (n1, n2) = (x1.len(), x2.len());
    let (tv1, tv2) = (x1.tv_norm(), x2.tv_norm());
    // Balanced problem: a dummy source holding TV(x2) feeds creation, a
    // dummy sink holding TV(x1) absorbs destruction.
    let rows = n1 + 1;
    let cols = n2 + 1;
    let inner = cost_matrix(x1, x2, norm, COST_CAP);
    let mut cost = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            cost[i * cols + j] = match (i < n1, j < n2) {
                (true, true) => inner[i * n2 + j],
                (true, false) | (false, true) => 1.0,
                (false, false) => 0.0,
            };
        }
    }
    let mut supply = x1.weights();
    supply.push(tv2);
    let mut demand = x2.weights();
    demand.push(tv1);
    let flow = transport_simplex(&supply, &demand, &cost);

    let mut coupling = vec![0.0; n1 * n2];
    let mut destroyed = vec![0.0; n1];
    let mut created = vec![0.0; n2];
    for i in 0..n1 {
        for j in 0..n2 {
            coupling[i * n2 + j] = flow[i * cols + j];
        }
        destroyed[i] = flow[i * cols + n2];
    }
    for j in 0..n2 {
        created[j] = flow[n1 * cols + j];
    }
    let objective = coupling.iter().zip(&inner).map(|(f, c)| f * c).sum::<f64>()
        + destroyed.iter().sum::<f64>()
        + created.iter().sum::<f64>();
    (
        objective,
        TransportPlan {
            coupling,
            n1,
            n2,
            destroyed,
            created,
            objective,
        },
    )
}

/// Exact minimum of the generalized Wasserstein objective by enumerating
/// every vertex of its feasible polytope. Only for tiny measures.
pub fn gw_bruteforce(x1: &AtomicMeasure, x2: &AtomicMeasure, norm: GroundNorm) -> Result<f64> {
    let (n1, n2) = (x1.len(), x2.len());
    if n1 > 4 || n2 > 4 {
        return Err(Error::TooManyAtoms {
            limit: 4,
            got: n1.max(n2),
        });
    }
    let (tv1, tv2) = (x1.tv_norm(), x2.tv_norm());
    if n1 == 0 || n2 == 0 {
        return Ok(tv1 + tv2);
    }
    // Variables: γ (n1·n2) then row slacks (n1) then column slacks (n2).
    let nv = n1 * n2 + n1 + n2;
    let m = n1 + n2;
    let mut a = DMatrix::<f64>::zeros(m, nv);
    for i in 0..n1 {
        for j in 0..n2 {
            a[(i, i * n2 + j)] = 1.0;
            a[(n1 + j, i * n2 + j)] = 1.0;
        }
        a[(i, n1 * n2 + i)] = 1.0;
    }
    for j in 0..n2 {
        a[(n1 + j, n1 * n2 + n1 + j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(m);
    for (i, w) in x1.weights().into_iter().enumerate() {
        rhs[i] = w;
    }
    for (j, w) in x2.weights().into_iter().enumerate() {
        rhs[n1 + j] = w;
    }
    let cost = cost_matrix(x1, x2, norm, COST_CAP);
    // Objective Σ (c_ij − 2) γ_ij + TV1 + TV2; slacks cost nothing here.
    let obj = |x: &DVector<f64>| -> f64 {
        (0..n1 * n2).map(|k| (cost[k] - 2.0) * x[k]).sum::<f64>() + tv1 + tv2
    };
    let mut best = tv1 + tv2;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let mut b = DMatrix::<f64>::zeros(m, m);
        for (c, &k) in idx.iter().enumerate() {
            b.set_column(c, &a.column(k));
        }
        let lu = b.full_piv_lu();
        if lu.is_invertible() {
            if let Some(xb) = lu.solve(&rhs) {
                if xb.iter().all(|v| *v >= -1e-12) {
                    let mut x = DVector::<f64>::zeros(nv);
                    for (c, &k) in idx.iter().enumerate() {
                        x[k] = xb[c].max(0.0);
                    }
                    best = best.min(obj(&x));
                }
            }
        }
        // Next m-subset of 0..nv in lexicographic order.
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if idx[i] < nv - m + i {
                idx[i] += 1;
                for k in i + 1..m {
                    idx[k] = idx[k - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Balanced transportation problem by the transportation simplex
/// (spanning-tree basis, MODI potentials). Falls back to the dense simplex
/// when the pivot budget runs out. Returns the row-major flow.
pub fn transport_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<f64> {
    let (n, m) = (supply.len(), demand.len());
    match network_simplex(supply, demand, cost) {
        Some(f) => f,
        None => dense_transport(supply, demand, cost).unwrap_or_else(|| vec![0.0; n * m]),
    }
}

fn network_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Option<Vec<f64>> {
    let (n, m) = (supply.len(), demand.len());
    if n == 0 || m == 0 {
        return Some(Vec::new());
    }
    let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    let mut flow = vec![0.0; n * m];
    let mut basic = vec![false; n * m];
    let mut cells: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);

    // Northwest corner start, which always yields a spanning tree of n+m−1 cells.
    let (mut a, mut b) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = a[i].min(b[j]).max(0.0);
        flow[i * m + j] = x;
        basic[i * m + j] = true;
        cells.push((i, j));
        a[i] -= x;
        b[j] -= x;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if j == m - 1 || (i < n - 1 && a[i] <= b[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let nodes = n + m;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let mut parent = vec![usize::MAX; nodes];
    let mut parent_cell = vec![usize::MAX; nodes];
    let mut stack: Vec<usize> = Vec::with_capacity(nodes);
    let budget = 100 * (n + m) * (n + m) + 1000;
    for iter in 0..budget {
        // Tree adjacency: node ids are rows 0..n and columns n..n+m.
        for l in adj.iter_mut() {
            l.clear();
        }
        for (c, &(ci, cj)) in cells.iter().enumerate() {
            adj[ci].push(c);
            adj[n + cj].push(c);
        }
        // Potentials with u_0 = 0 and c_ij = u_i + v_j on basic cells.
        let mut seen = vec![false; nodes];
        seen[0] = true;
        u[0] = 0.0;
        stack.clear();
        stack.push(0);
        while let Some(node) = stack.pop() {
            for &c in &adj[node] {
                let (ci, cj) = cells[c];
                let other = if node < n { n + cj } else { ci };
                if !seen[other] {
                    seen[other] = true;
                    if other < n {
                        u[ci] = cost[ci * m + cj] - v[cj];
                    } else {
                        v[cj] = cost[ci * m + cj] - u[ci];
                    }
                    stack.push(other);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return None;
        }
        // Entering cell: most negative reduced cost; after many pivots use
        // the first negative one (Bland) to rule out cycling.
        let bland = iter > 20 * (n + m);
        let mut enter: Option<(usize, usize, f64)> = None;
        'scan: for ii in 0..n {
            for jj in 0..m {
                if basic[ii * m + jj] {
                    continue;
                }
                let r = cost[ii * m + jj] - u[ii] - v[jj];
                if r < -1e-12 * scale {
                    if bland {
                        enter = Some((ii, jj, r));
                        break 'scan;
                    }
                    if enter.is_none_or(|e| r < e.2) {
                        enter = Some((ii, jj, r));
                    }
                }
            }
        }
        let Some((ei, ej, _)) = enter else {
            return Some(flow);
        };
        // Tree path from row node ei to column node n+ej.
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        parent[ei] = ei;
        stack.clear();
        stack.push(ei);
        let target = n + ej;
        while let Some(node) = stack.pop() {
            if node == target {
                break;
            }
            for &c in &adj[node] {
                let (ci, cj) = cells[c];
                let other = if node < n { n + cj } else { ci };
                if parent[other] == usize::MAX {
                    parent[other] = node;
                    parent_cell[other] = c;
                    stack.push(other);
                }
            }
        }
        if parent[target] == usize::MAX {
            return None;
        }
        // Walking back from the column node, cells alternate −, +, −, ...
        let mut path: Vec<usize> = Vec::new();
        let mut node = target;
        while node != ei {
            path.push(parent_cell[node]);
            node = parent[node];
        }
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &c) in path.iter().enumerate() {
            if k % 2 == 0 {
                let (ci, cj) = cells[c];
                let f = flow[ci * m + cj];
                if f < theta - 1e-15 || (f <= theta + 1e-15 && leave != usize::MAX && c < leave) {
                    theta = f;
                    leave = c;
                }
            }
        }
        if leave == usize::MAX {
            return None;
        }
        let theta = theta.max(0.0);
        for (k, &c) in path.iter().enumerate() {
            let (ci, cj) = cells[c];
            if k % 2 == 0 {
                flow[ci * m + cj] = (flow[ci * m + cj] - theta).max(0.0);
            } else {
                flow[ci * m + cj] += theta;
            }
        }
        flow[ei * m + ej] = theta;
        let (li, lj) = cells[leave];
        basic[li * m + lj] = false;
        flow[li * m + lj] = 0.0;
        basic[ei * m + ej] = true;
        cells[leave] = (ei, ej);
    }
    None
}

fn dense_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Option<Vec<f64>> {
    let (n, m) = (supply.len(), demand.len());
    let rows = n + m;
    let cols = n * m;
    let mut a = vec![0.0; rows * cols];
    for i in 0..n {
        for j in 0..m {
            a[i * cols + i * m + j] = 1.0;
            a[(n + j) * cols + i * m + j] = 1.0;
        }
    }
    let mut b = supply.to_vec();
    b.extend_from_slice(demand);
    match solve_standard(&a, &b, cost, rows, cols) {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// Dense-simplex value of the generalized Wasserstein objective, used to
/// cross-check the network simplex.
pub fn gen_wasserstein_dense(x1: &AtomicMeasure, x2: &AtomicMeasure, norm: GroundNorm) -> Option<f64> {
    let (n1, n2) = (x1.len(), x2.len());
    let (rows, cols) = (n1 + 1, n2 + 1);
    let inner = cost_matrix(x1, x2, norm, COST_CAP);
    let mut cost = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            cost[i * cols + j] = match (i < n1, j < n2) {
                (true, true) => inner[i * n2 + j],
                (true, false) | (false, true) => 1.0,
                (false, false) => 0.0,
            };
        }
    }
    let mut supply = x1.weights();
    supply.push(x2.tv_norm());
    let mut demand = x2.weights();
    demand.push(x1.tv_norm());
    let flow = dense_transport(&supply, &demand, &cost)?;
    Some(flow.iter().zip(&cost).map(|(f, c)| f * c).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(tr: &[(f64, f64, f64)]) -> AtomicMeasure {
        AtomicMeasure::from_triples(tr).unwrap()
    }

    #[test]
    fn network_simplex_matches_dense_on_a_fixed_instance() {
        let supply = [3.0, 1.0, 2.0];
        let demand = [2.0, 2.0, 2.0];
        let cost = [4.0, 1.0, 3.0, 2.0, 5.0, 1.0, 3.0, 2.0, 6.0];
        let f1 = network_simplex(&supply, &demand, &cost).unwrap();
        let f2 = dense_transport(&supply, &demand, &cost).unwrap();
        let c1: f64 = f1.iter().zip(&cost).map(|(a, b)| a * b).sum();
        let c2: f64 = f2.iter().zip(&cost).map(|(a, b)| a * b).sum();
        assert!((c1 - c2).abs() < 1e-12, "{c1} vs {c2}");
    }

    #[test]
    fn destruction_only() {
        let x = m(&[(0.3, 0.4, 0.7)]);
        let (d, p) = gen_wasserstein(&x, &AtomicMeasure::empty(), GroundNorm::L2);
        assert!((d - 0.7).abs() < 1e-15);
        assert!((p.destroyed_mass() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn cap_keeps_far_pairs_apart() {
        let x = m(&[(0.0, 0.0, 1.0)]);
        let y = m(&[(1.0, 1.0, 1.0)]);
        let (d, _) = gen_wasserstein(&x, &y, GroundNorm::L1);
        assert!((d - 2.0).abs() < 1e-15);
        let (w, _) = wasserstein(&x, &y, GroundNorm::L1).unwrap();
        assert!((w - 2.0).abs() < 1e-15);
    }
}
