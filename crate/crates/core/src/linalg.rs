//! Small dense helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

/// Solves `a x = b`. Square systems use full-pivot LU; underdetermined
/// systems return the minimum-norm solution through a QR factorisation of
/// `aᵀ`; overdetermined systems return the least-squares solution.
pub fn solve_min_norm(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let (r, c) = a.shape();
    if r == c {
        return a.clone().full_piv_lu().solve(b);
    }
    if r < c {
        let qr = a.transpose().qr();
        let rt = qr.r().transpose();
        let y = rt.solve_lower_triangular(b)?;
        Some(qr.q() * y)
    } else {
        let qr = a.clone().qr();
        let qtb = qr.q().transpose() * b;
        qr.r().solve_upper_triangular(&qtb)
    }
}

/// Sign and natural log of |det a| by LU with partial pivoting.
/// A singular matrix returns sign 0 and `-inf`.
pub fn sign_log_det(a: &DMatrix<f64>) -> (f64, f64) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut m = a.clone();
    let mut sign = 1.0;
    let mut logdet = 0.0;
    for k in 0..n {
        let mut p = k;
        let mut best = m[(k, k)].abs();
        for i in (k + 1)..n {
            let v = m[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 || !best.is_finite() {
            return (0.0, f64::NEG_INFINITY);
        }
        if p != k {
            m.swap_rows(p, k);
            sign = -sign;
        }
        let piv = m[(k, k)];
        if piv < 0.0 {
            sign = -sign;
        }
        logdet += libm::log(piv.abs());
        for i in (k + 1)..n {
            let f = m[(i, k)] / piv;
            if f != 0.0 {
                for j in (k + 1)..n {
                    let v = m[(k, j)];
                    m[(i, j)] -= f * v;
                }
            }
        }
    }
    (sign, logdet)
}

/// Scales every row to unit max-abs, in place. Zero rows are left alone.
pub fn normalize_rows(a: &mut DMatrix<f64>) {
    for i in 0..a.nrows() {
        let mx = a.row(i).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mx > 0.0 {
            a.row_mut(i).scale_mut(1.0 / mx);
        }
    }
}

/// Scales every column to unit max-abs, in place.
pub fn normalize_cols(a: &mut DMatrix<f64>) {
    for j in 0..a.ncols() {
        let mx = a.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if mx > 0.0 {
            a.column_mut(j).scale_mut(1.0 / mx);
        }
    }
}

pub fn linspace(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => alloc::vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn frobenius(a: &DMatrix<f64>) -> f64 {
    libm::sqrt(a.iter().map(|v| v * v).sum())
}
