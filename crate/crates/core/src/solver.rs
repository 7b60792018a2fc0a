//! Discretised feasibility program: nonnegative least squares on a uniform
//! grid, followed by support extraction.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::imaging::{design_matrix, vectorize, Basis, ImageObservation};
use crate::measures::{Atom, AtomicMeasure, Point};

/// Uniform grid with `n` nodes per axis, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid("grid needs at least 2 nodes per axis"));
        }
        Ok(Grid { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / (self.n - 1) as f64
    }

    /// Node (i, j) sits at flat index i·n + j.
    pub fn point(&self, k: usize) -> Point {
        Point::new(self.node(k / self.n), self.node(k % self.n))
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.n * self.n).map(|k| self.point(k)).collect()
    }

    /// Flat index of the node nearest to `p`.
    pub fn nearest(&self, p: &Point) -> usize {
        let f = |x: f64| (libm::round(x * (self.n - 1) as f64) as usize).min(self.n - 1);
        f(p.t) * self.n + f(p.s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnlsMethod {
    /// Lawson–Hanson active set.
    #[default]
    ActiveSet,
    /// Accelerated projected gradient with monotone restart.
    ProjectedGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsResult {
    pub z: DVector<f64>,
    pub residual: f64,
    /// ½‖Az − y‖² after every accepted iterate, starting from z = 0.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Projected-gradient ∞-norm fell below the tolerance.
    pub converged: bool,
}

/// y − Az with compensated products and sums, so the error scales with
/// the residual rather than with ‖y‖.
pub fn residual_vector(a: &DMatrix<f64>, z: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let support: Vec<usize> = (0..z.len()).filter(|&j| z[j] != 0.0).collect();
    DVector::from_fn(y.len(), |i, _| {
        let (mut s, mut c) = (y[i], 0.0);
        for &j in &support {
            let p = a[(i, j)] * z[j];
            let e = libm::fma(a[(i, j)], z[j], -p);
            let t = s - p;
            let bp = t - s;
            c += (s - (t - bp)) + (-p - bp) - e;
            s = t;
        }
        s + c
    })
}

fn objective(a: &DMatrix<f64>, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
    0.5 * residual_vector(a, z, y).norm_squared()
}

/// ∞-norm of the projected gradient of ½‖Az − y‖² at z.
pub fn projected_gradient_norm(a: &DMatrix<f64>, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
    let g = -a.tr_mul(&residual_vector(a, z, y));
    g.iter()
        .zip(z.iter())
        .map(|(gi, zi)| if *zi > 0.0 { gi.abs() } else { (-gi).max(0.0) })
        .fold(0.0, f64::max)
}

/// min ½‖Az − y‖² subject to z ≥ 0.
pub fn nnls(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    tol: f64,
    max_iter: usize,
    method: NnlsMethod,
) -> Result<NnlsResult> {
    if a.nrows() != y.len() {
        return Err(invalid("dimension mismatch between A and y"));
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    match method {
        NnlsMethod::ActiveSet => Ok(lawson_hanson(a, y, tol, max_iter)),
        NnlsMethod::ProjectedGradient => Ok(fista(a, y, tol, max_iter)),
    }
}

/// Builds the Householder reflection that zeroes `u[l1..]` into `u[p]`;
/// returns the stored pivot component.
fn householder_build(u: &mut [f64], p: usize, l1: usize) -> f64 {
    let mut cl = u[p].abs();
    for v in &u[l1..] {
        cl = cl.max(v.abs());
    }
    if cl <= 0.0 {
        return 0.0;
    }
    let inv = 1.0 / cl;
    let sm = (u[p] * inv) * (u[p] * inv) + u[l1..].iter().map(|v| (v * inv) * (v * inv)).sum::<f64>();
    let mut cl = cl * libm::sqrt(sm);
    if u[p] > 0.0 {
        cl = -cl;
    }
    let up = u[p] - cl;
    u[p] = cl;
    up
}

/// Applies the reflection stored in (`u`, `up`) to `c`.
fn householder_apply(u: &[f64], up: f64, p: usize, l1: usize, c: &mut [f64]) {
    if u[p].abs() <= 0.0 {
        return;
    }
    let b = up * u[p];
    if b >= 0.0 {
        return;
    }
    let mut sm = c[p] * up;
    for i in l1..u.len() {
        sm += c[i] * u[i];
    }
    if sm == 0.0 {
        return;
    }
    let sm = sm / b;
    c[p] += sm * up;
    for i in l1..u.len() {
        c[i] += sm * u[i];
    }
}

/// Givens rotation (c, s, r) with [c s; −s c]·[a; b] = [r; 0].
fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if a.abs() > b.abs() {
        let xr = b / a;
        let yr = libm::sqrt(1.0 + xr * xr);
        let c = libm::copysign(1.0 / yr, a);
        (c, c * xr, a.abs() * yr)
    } else if b != 0.0 {
        let xr = a / b;
        let yr = libm::sqrt(1.0 + xr * xr);
        let s = libm::copysign(1.0 / yr, b);
        (s * xr, s, b.abs() * yr)
    } else {
        (0.0, 1.0, 0.0)
    }
}

/// Lawson–Hanson active set on an orthogonally triangularised copy of the
/// system. Dual values and the residual are read from the transformed
/// right-hand side, which keeps them accurate near an exact fit.
fn lawson_hanson(a0: &DMatrix<f64>, y: &DVector<f64>, tol: f64, max_iter: usize) -> NnlsResult {
    const FACTOR: f64 = 0.01;
    let (m, n) = a0.shape();
    let mut a = a0.clone();
    let mut b: Vec<f64> = y.iter().copied().collect();
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut zz = vec![0.0; m];
    // index[..nsetp] is the passive set, index[nsetp..] the active set.
    let mut index: Vec<usize> = (0..n).collect();
    let mut nsetp = 0;
    let mut iterations = 0;
    let mut converged = false;
    let half_tail = |b: &[f64], from: usize| 0.5 * b[from.min(m)..].iter().map(|v| v * v).sum::<f64>();
    let mut trace = vec![half_tail(&b, 0)];
    let mut colj = vec![0.0; m];

    // Back substitution of the leading nsetp×nsetp triangle into zz.
    let solve = |a: &DMatrix<f64>, index: &[usize], nsetp: usize, zz: &mut [f64]| {
        let mut jj = 0;
        for l in 0..nsetp {
            let ip = nsetp - 1 - l;
            if l != 0 {
                for ii in 0..=ip {
                    zz[ii] -= a[(ii, jj)] * zz[ip + 1];
                }
            }
            jj = index[ip];
            zz[ip] /= a[(ip, jj)];
        }
    };

    'outer: loop {
        if nsetp >= n || nsetp >= m {
            converged = true;
            break;
        }
        for &j in &index[nsetp..] {
            w[j] = (nsetp..m).map(|l| a[(l, j)] * b[l]).sum();
        }
        loop {
            let mut wmax = 0.0;
            let mut izmax = None;
            for (iz, &j) in index.iter().enumerate().skip(nsetp) {
                if w[j] > wmax {
                    wmax = w[j];
                    izmax = Some(iz);
                }
            }
            let Some(iz) = izmax.filter(|_| wmax > tol) else {
                converged = true;
                break 'outer;
            };
            let j = index[iz];
            let asave = a[(nsetp, j)];
            let up = householder_build(a.column_mut(j).as_mut_slice(), nsetp, nsetp + 1);
            let unorm = libm::sqrt((0..nsetp).map(|l| a[(l, j)] * a[(l, j)]).sum::<f64>());
            if (unorm + a[(nsetp, j)].abs() * FACTOR) - unorm > 0.0 {
                zz.copy_from_slice(&b);
                householder_apply(a.column(j).as_slice(), up, nsetp, nsetp + 1, &mut zz);
                let ztest = zz[nsetp] / a[(nsetp, j)];
                if ztest > 0.0 {
                    b.copy_from_slice(&zz);
                    index.swap(iz, nsetp);
                    nsetp += 1;
                    colj.copy_from_slice(a.column(j).as_slice());
                    for &jj in &index[nsetp..] {
                        householder_apply(&colj, up, nsetp - 1, nsetp, a.column_mut(jj).as_mut_slice());
                    }
                    for l in nsetp..m {
                        a[(l, j)] = 0.0;
                    }
                    w[j] = 0.0;
                    break;
                }
            }
            a[(nsetp, j)] = asave;
            w[j] = 0.0;
        }
        zz.copy_from_slice(&b);
        solve(&a, &index, nsetp, &mut zz);

        loop {
            iterations += 1;
            if iterations > max_iter {
                break 'outer;
            }
            let mut alpha = 2.0;
            let mut jj_min = 0;
            for ip in 0..nsetp {
                let l = index[ip];
                if zz[ip] <= 0.0 {
                    let t = -x[l] / (zz[ip] - x[l]);
                    if alpha > t {
                        alpha = t;
                        jj_min = ip;
                    }
                }
            }
            if alpha == 2.0 {
                break;
            }
            for ip in 0..nsetp {
                let l = index[ip];
                x[l] += alpha * (zz[ip] - x[l]);
            }
            let mut drop = jj_min;
            loop {
                let i = index[drop];
                x[i] = 0.0;
                for jpos in drop + 1..nsetp {
                    let ii = index[jpos];
                    index[jpos - 1] = ii;
                    let (c, s, r) = givens(a[(jpos - 1, ii)], a[(jpos, ii)]);
                    a[(jpos - 1, ii)] = r;
                    a[(jpos, ii)] = 0.0;
                    for l in 0..n {
                        if l != ii {
                            let t = a[(jpos - 1, l)];
                            a[(jpos - 1, l)] = c * t + s * a[(jpos, l)];
                            a[(jpos, l)] = -s * t + c * a[(jpos, l)];
                        }
                    }
                    let t = b[jpos - 1];
                    b[jpos - 1] = c * t + s * b[jpos];
                    b[jpos] = -s * t + c * b[jpos];
                }
                nsetp -= 1;
                index[nsetp] = i;
                // Round-off can leave other passive coefficients nonpositive.
                match (0..nsetp).find(|&p| x[index[p]] <= 0.0) {
                    Some(p) => drop = p,
                    None => break,
                }
            }
            zz.copy_from_slice(&b);
            solve(&a, &index, nsetp, &mut zz);
        }
        for ip in 0..nsetp {
            x[index[ip]] = zz[ip];
        }
        trace.push(half_tail(&b, nsetp));
    }
    let z = DVector::from_vec(x);
    let residual = residual_vector(a0, &z, y).norm();
    NnlsResult {
        z,
        residual,
        objective_trace: trace,
        iterations,
        converged,
    }
}

fn fista(a: &DMatrix<f64>, y: &DVector<f64>, tol: f64, max_iter: usize) -> NnlsResult {
    let n = a.ncols();
    // Largest eigenvalue of AᵀA by power iteration on the smaller Gram matrix.
    let g = a * a.transpose();
    let mut v = DVector::<f64>::from_element(g.nrows(), 1.0);
    let mut lip = 0.0;
    for _ in 0..100 {
        let w = &g * &v;
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        lip = nw / v.norm();
        v = w / nw;
    }
    let lip = (lip * 1.01).max(1e-300);
    let aty = a.tr_mul(y);

    let mut x = DVector::<f64>::zeros(n);
    let mut yk = x.clone();
    let mut tk = 1.0;
    let mut f = objective(a, &x, y);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let grad = a.tr_mul(&(a * &yk)) - &aty;
        let cand = (&yk - grad / lip).map(|v| v.max(0.0));
        let f_cand = objective(a, &cand, y);
        let t_next = 0.5 * (1.0 + libm::sqrt(1.0 + 4.0 * tk * tk));
        if f_cand <= f {
            yk = &cand + (&cand - &x) * ((tk - 1.0) / t_next);
            x = cand;
            f = f_cand;
            tk = t_next;
        } else {
            // Restart the momentum from the last accepted point.
            yk = x.clone();
            tk = 1.0;
        }
        trace.push(f);
        if projected_gradient_norm(a, &x, y) <= tol {
            converged = true;
            break;
        }
    }
    let residual = (a * &x - y).norm();
    NnlsResult {
        z: x,
        residual,
        objective_trace: trace,
        iterations,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub method: NnlsMethod,
    pub mass_floor: f64,
}

impl Default for RecoverOptions {
    fn default() -> Self {
        RecoverOptions {
            tol: 1e-30,
            max_iter: 5000,
            method: NnlsMethod::ActiveSet,
            mass_floor: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    pub grid: Grid,
    /// Weight of every grid node, flat index i·n + j.
    pub z: Vec<f64>,
    pub residual: f64,
    pub extracted: AtomicMeasure,
    pub iterations: usize,
    /// Residual is within δ′.
    pub converged: bool,
}

impl RecoveryResult {
    /// The gridded solution as a measure (every positive node).
    pub fn z_measure(&self) -> AtomicMeasure {
        grid_measure(&self.z, &self.grid)
    }
}

pub fn grid_measure(z: &[f64], grid: &Grid) -> AtomicMeasure {
    AtomicMeasure::new(z.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(k, w)| Atom {
        loc: grid.point(k),
        weight: *w,
    }))
    .unwrap_or_default()
}

/// Finds a nonnegative gridded measure matching the observation within δ′
/// as closely as the grid allows, then extracts an atomic estimate.
pub fn recover<B: Basis + ?Sized>(
    w: &B,
    obs: &ImageObservation,
    grid: &Grid,
    deltap: f64,
    opts: &RecoverOptions,
) -> Result<RecoveryResult> {
    if !(deltap >= obs.delta) {
        return Err(invalid("deltap must be at least the noise level"));
    }
    if obs.y.nrows() != w.len() || obs.y.ncols() != w.len() {
        return Err(invalid("observation size does not match the window"));
    }
    let a = design_matrix(w, &grid.points());
    let y = vectorize(&obs.y);
    let res = nnls(&a, &y, opts.tol, opts.max_iter, opts.method)?;
    let z: Vec<f64> = res.z.iter().copied().collect();
    let residual = residual_vector(&a, &res.z, &y).norm();
    let extracted = extract_support(&z, grid, opts.mass_floor)?;
    Ok(RecoveryResult {
        grid: *grid,
        converged: residual <= deltap,
        z,
        residual,
        extracted,
        iterations: res.iterations,
    })
}

/// Merges 4-connected components of nodes heavier than `mass_floor` into
/// single atoms at their weighted centroids. Components whose total is at
/// most `mass_floor · TV(z)` are dropped.
pub fn extract_support(z: &[f64], grid: &Grid, mass_floor: f64) -> Result<AtomicMeasure> {
    let n = grid.n();
    if z.len() != n * n {
        return Err(invalid("weights do not match the grid"));
    }
    if z.iter().any(|v| !(*v >= 0.0)) {
        return Err(invalid("gridded weights must be nonnegative"));
    }
    let tv: f64 = z.iter().sum();
    let mut seen = vec![false; z.len()];
    let mut atoms = Vec::new();
    let mut stack = Vec::new();
    for start in 0..z.len() {
        if seen[start] || z[start] <= mass_floor {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut m, mut ct, mut cs) = (0.0, 0.0, 0.0);
        while let Some(k) = stack.pop() {
            let p = grid.point(k);
            m += z[k];
            ct += z[k] * p.t;
            cs += z[k] * p.s;
            let (i, j) = (k / n, k % n);
            let mut push = |ii: usize, jj: usize| {
                let q = ii * n + jj;
                if !seen[q] && z[q] > mass_floor {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < n {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < n {
                push(i, j + 1);
            }
        }
        if m > mass_floor * tv {
            atoms.push(Atom {
                loc: Point::new((ct / m).clamp(0.0, 1.0), (cs / m).clamp(0.0, 1.0)),
                weight: m,
            });
        }
    }
    AtomicMeasure::new(atoms)
}

/// How the feasibility radius δ′ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltapRule {
    Explicit(f64),
    /// δ + L·R.
    Additive,
    /// (1 + L·R)·δ.
    Multiplicative,
}

/// δ′ = δ + L·R.
pub fn choose_deltap(delta: f64, lipschitz: f64, residual_r: f64) -> f64 {
    delta + lipschitz * residual_r
}

/// δ′ = (1 + L·R)·δ.
pub fn choose_deltap_multiplicative(delta: f64, lipschitz: f64, residual_r: f64) -> f64 {
    (1.0 + lipschitz * residual_r) * delta
}

impl DeltapRule {
    pub fn apply(&self, delta: f64, lipschitz: f64, residual_r: f64) -> f64 {
        match *self {
            DeltapRule::Explicit(v) => v,
            DeltapRule::Additive => choose_deltap(delta, lipschitz, residual_r),
            DeltapRule::Multiplicative => choose_deltap_multiplicative(delta, lipschitz, residual_r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_indexing_round_trips() {
        let g = Grid::new(5).unwrap();
        let p = g.point(7);
        assert_eq!((p.t, p.s), (0.25, 0.5));
        assert_eq!(g.nearest(&p), 7);
    }
}
