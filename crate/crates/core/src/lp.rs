//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min cᵀx  s.t.  A x = b, x ≥ 0`. Meant for small problems
//! (a few hundred columns at most).

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, objective: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

const TOL: f64 = 1e-11;

/// `a` is row-major with `m` rows and `n` columns.
pub fn solve_standard(a: &[f64], b: &[f64], c: &[f64], m: usize, n: usize) -> LpOutcome {
    assert_eq!(a.len(), m * n);
    assert_eq!(b.len(), m);
    assert_eq!(c.len(), n);
    // Tableau columns: n originals, m artificials, rhs.
    let w = n + m + 1;
    let mut t = vec![0.0; (m + 1) * w];
    for i in 0..m {
        let flip = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = flip * a[i * n + j];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + w - 1] = flip * b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    // Phase one: minimise the sum of artificials.
    let obj = m;
    for j in 0..w {
        let s: f64 = (0..m).map(|i| t[i * w + j]).sum();
        t[obj * w + j] = if (n..n + m).contains(&j) { 0.0 } else { -s };
    }
    if !run(&mut t, &mut basis, m, w, n + m) {
        return LpOutcome::IterationLimit;
    }
    let scale = 1.0 + b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if -t[obj * w + w - 1] > 1e-9 * scale {
        return LpOutcome::Infeasible;
    }
    // Drive artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r * w + j].abs() > TOL) {
                pivot(&mut t, &mut basis, m, w, r, j);
            }
        }
    }

    // Phase two on original columns only.
    for j in 0..w {
        t[obj * w + j] = 0.0;
    }
    for j in 0..n {
        t[obj * w + j] = c[j];
    }
    for r in 0..m {
        let bj = basis[r];
        if bj < n {
            let f = t[obj * w + bj];
            if f != 0.0 {
                for j in 0..w {
                    t[obj * w + j] -= f * t[r * w + j];
                }
            }
        }
    }
    // Artificial columns are frozen by giving them no entering chance.
    match run_phase2(&mut t, &mut basis, m, w, n) {
        Some(true) => {}
        Some(false) => return LpOutcome::Unbounded,
        None => return LpOutcome::IterationLimit,
    }
    let mut x = vec![0.0; n];
    for r in 0..m {
        if basis[r] < n {
            x[basis[r]] = t[r * w + w - 1].max(0.0);
        }
    }
    let objective = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    LpOutcome::Optimal { x, objective }
}

fn pivot(t: &mut [f64], basis: &mut [usize], m: usize, w: usize, r: usize, j: usize) {
    let p = t[r * w + j];
    for k in 0..w {
        t[r * w + k] /= p;
    }
    for i in 0..=m {
        if i == r {
            continue;
        }
        let f = t[i * w + j];
        if f != 0.0 {
            for k in 0..w {
                t[i * w + k] -= f * t[r * w + k];
            }
        }
    }
    basis[r] = j;
}

/// Phase-one loop over `ncols` candidate columns. Returns false on the
/// iteration cap.
fn run(t: &mut [f64], basis: &mut [usize], m: usize, w: usize, ncols: usize) -> bool {
    matches!(iterate(t, basis, m, w, ncols), Some(true))
}

fn run_phase2(t: &mut [f64], basis: &mut [usize], m: usize, w: usize, n: usize) -> Option<bool> {
    iterate(t, basis, m, w, n)
}

/// Bland's rule iterations. `Some(true)` optimal, `Some(false)` unbounded,
/// `None` iteration cap.
fn iterate(t: &mut [f64], basis: &mut [usize], m: usize, w: usize, ncols: usize) -> Option<bool> {
    let cap = 50 * (m + ncols) + 1000;
    for _ in 0..cap {
        let entering = (0..ncols).find(|&j| t[m * w + j] < -TOL);
        let Some(j) = entering else {
            return Some(true);
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t[r * w + j];
            if a > TOL {
                let ratio = t[r * w + w - 1] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lv)) => {
                        if ratio < lv - 1e-14 || (ratio <= lv + 1e-14 && basis[r] < basis[lr]) {
                            Some((r, ratio))
                        } else {
                            Some((lr, lv))
                        }
                    }
                };
            }
        }
        let Some((r, _)) = leave else {
            return Some(false);
        };
        pivot(t, basis, m, w, r, j);
    }
    None
}
