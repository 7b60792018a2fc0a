//! Measurement windows, the tensor-product imaging operator and the
//! forward model.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};
use crate::measures::{AtomicMeasure, Point};

/// Step of the central differences used for tabulated windows.
pub const FD_STEP: f64 = 1e-6;

/// A family of M continuous functions on [0,1].
pub trait Basis {
    fn len(&self) -> usize;

    /// Writes φ_0(t), …, φ_{M−1}(t) into `out`.
    fn eval_into(&self, t: f64, out: &mut [f64]);

    /// Writes the first derivatives into `out`.
    fn deriv_into(&self, t: f64, out: &mut [f64]);

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn eval_vec(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.eval_into(t, &mut v);
        v
    }

    fn deriv_vec(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.deriv_into(t, &mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Window {
    /// φ_m(t) = exp(−(t − t′_m)²/σ²).
    Gaussian { sigma: f64, centers: Vec<f64> },
    /// φ_m(t) = t^m, m = 0..M−1.
    Monomial { m: usize },
    /// Samples `values[m][i]` of φ_m at `nodes[i]`, linearly interpolated.
    Tabulated { nodes: Vec<f64>, values: Vec<Vec<f64>> },
}

impl Window {
    pub fn gaussian(sigma: f64, centers: Vec<f64>) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(invalid("sigma must be positive"));
        }
        if centers.is_empty() {
            return Err(invalid("a window needs at least one function"));
        }
        if centers.iter().any(|c| !c.is_finite() || !(0.0..=1.0).contains(c)) {
            return Err(invalid("window centers must lie in [0,1]"));
        }
        if centers.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("window centers must be distinct and ascending"));
        }
        Ok(Window::Gaussian { sigma, centers })
    }

    /// M equispaced centers including both endpoints.
    pub fn gaussian_uniform(sigma: f64, m: usize) -> Result<Self> {
        Self::gaussian(sigma, crate::linalg::linspace(m))
    }

    pub fn monomial(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(invalid("a window needs at least one function"));
        }
        Ok(Window::Monomial { m })
    }

    pub fn tabulated(nodes: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if nodes.len() < 2 || values.is_empty() {
            return Err(invalid("tabulated window needs ≥2 nodes and ≥1 function"));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1])
            || nodes[0] > 0.0
            || nodes[nodes.len() - 1] < 1.0
        {
            return Err(invalid("tabulation nodes must be ascending and cover [0,1]"));
        }
        if values
            .iter()
            .any(|v| v.len() != nodes.len() || v.iter().any(|x| !x.is_finite()))
        {
            return Err(invalid("tabulated values must be finite, one per node"));
        }
        Ok(Window::Tabulated { nodes, values })
    }

    pub fn has_analytic_derivative(&self) -> bool {
        !matches!(self, Window::Tabulated { .. })
    }

    /// φ_m(t) with a 0-based index.
    pub fn phi_eval(&self, m: usize, t: f64) -> Result<f64> {
        self.check(m)?;
        Ok(self.eval_vec(t)[m])
    }

    /// φ′_m(t) with a 0-based index.
    pub fn phi_deriv(&self, m: usize, t: f64) -> Result<f64> {
        self.check(m)?;
        Ok(self.deriv_vec(t)[m])
    }

    fn check(&self, m: usize) -> Result<()> {
        if m >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: m,
                len: self.len(),
            });
        }
        Ok(())
    }

    fn tab_eval(nodes: &[f64], values: &[Vec<f64>], t: f64, out: &mut [f64]) {
        let k = match nodes.iter().position(|&x| x > t) {
            Some(0) => 0,
            Some(p) => p - 1,
            None => nodes.len() - 2,
        }
        .min(nodes.len() - 2);
        let (x0, x1) = (nodes[k], nodes[k + 1]);
        let a = (t - x0) / (x1 - x0);
        for (o, v) in out.iter_mut().zip(values) {
            *o = v[k] * (1.0 - a) + v[k + 1] * a;
        }
    }
}

impl Basis for Window {
    fn len(&self) -> usize {
        match self {
            Window::Gaussian { centers, .. } => centers.len(),
            Window::Monomial { m } => *m,
            Window::Tabulated { values, .. } => values.len(),
        }
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Window::Gaussian { sigma, centers } => {
                for (o, c) in out.iter_mut().zip(centers) {
                    let u = (t - c) / sigma;
                    *o = libm::exp(-u * u);
                }
            }
            Window::Monomial { .. } => {
                let mut p = 1.0;
                for o in out.iter_mut() {
                    *o = p;
                    p *= t;
                }
            }
            Window::Tabulated { nodes, values } => Self::tab_eval(nodes, values, t, out),
        }
    }

    fn deriv_into(&self, t: f64, out: &mut [f64]) {
        match self {
            Window::Gaussian { sigma, centers } => {
                for (o, c) in out.iter_mut().zip(centers) {
                    let u = (t - c) / sigma;
                    *o = -2.0 * u / sigma * libm::exp(-u * u);
                }
            }
            Window::Monomial { .. } => {
                let mut p = 1.0;
                for (k, o) in out.iter_mut().enumerate() {
                    if k == 0 {
                        *o = 0.0;
                    } else {
                        *o = k as f64 * p;
                        p *= t;
                    }
                }
            }
            Window::Tabulated { nodes, values } => {
                let lo = (t - FD_STEP).max(0.0);
                let hi = (t + FD_STEP).min(1.0);
                let mut a = vec![0.0; out.len()];
                let mut b = vec![0.0; out.len()];
                Self::tab_eval(nodes, values, lo, &mut a);
                Self::tab_eval(nodes, values, hi, &mut b);
                for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                    *o = (y - x) / (hi - lo);
                }
            }
        }
    }
}

/// An M×M image with its Frobenius noise bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageObservation {
    pub y: DMatrix<f64>,
    pub delta: f64,
}

impl ImageObservation {
    pub fn new(y: DMatrix<f64>, delta: f64) -> Result<Self> {
        if y.iter().any(|v| !v.is_finite()) || !(delta >= 0.0) || !delta.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(ImageObservation { y, delta })
    }
}

/// The M×M matrix Φ(t,s) = [φ_m(t)φ_n(s)].
pub fn phi_matrix<B: Basis + ?Sized>(w: &B, p: &Point) -> DMatrix<f64> {
    let a = DVector::from_vec(w.eval_vec(p.t));
    let b = DVector::from_vec(w.eval_vec(p.s));
    &a * b.transpose()
}

/// y[m,n] = Σ_k a_k φ_m(t_k) φ_n(s_k).
pub fn forward<B: Basis + ?Sized>(w: &B, x: &AtomicMeasure) -> DMatrix<f64> {
    let m = w.len();
    let mut y = DMatrix::<f64>::zeros(m, m);
    let mut ft = vec![0.0; m];
    let mut fs = vec![0.0; m];
    for a in x.atoms() {
        w.eval_into(a.loc.t, &mut ft);
        w.eval_into(a.loc.s, &mut fs);
        for i in 0..m {
            let wi = a.weight * ft[i];
            for j in 0..m {
                y[(i, j)] += wi * fs[j];
            }
        }
    }
    y
}

/// Adds a pseudorandom perturbation of Frobenius norm exactly `delta`.
pub fn add_noise(y: &DMatrix<f64>, delta: f64, seed: u64) -> Result<ImageObservation> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(invalid("delta must be a finite nonnegative number"));
    }
    if delta == 0.0 {
        return ImageObservation::new(y.clone(), 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = DMatrix::<f64>::from_fn(y.nrows(), y.ncols(), |_, _| {
        <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let norm = crate::linalg::frobenius(&e);
    if norm == 0.0 {
        return Err(Error::Singular);
    }
    e *= delta / norm;
    ImageObservation::new(y + e, delta)
}

/// Lipschitz constant of θ ↦ Φ(θ) with respect to d_GW.
///
/// Closed form √(2M/(σ²e)) for Gaussian windows; otherwise the maximum over
/// a 101×101 grid of ‖Φ(θ)‖_F and the finite-difference gradient norm.
pub fn lipschitz(w: &Window) -> f64 {
    if let Window::Gaussian { sigma, centers } = w {
        let m = centers.len() as f64;
        return libm::sqrt(2.0 * m / (sigma * sigma * core::f64::consts::E));
    }
    lipschitz_estimate(w, 101)
}

/// Grid estimate used for non-Gaussian windows, exposed for comparison.
pub fn lipschitz_estimate<B: Basis + ?Sized>(w: &B, n: usize) -> f64 {
    let h = 1e-6;
    let nodes = crate::linalg::linspace(n.max(2));
    let norms: Vec<(f64, f64)> = nodes
        .iter()
        .map(|&t| {
            let v = w.eval_vec(t);
            let lo = (t - h).max(0.0);
            let hi = (t + h).min(1.0);
            let a = w.eval_vec(lo);
            let b = w.eval_vec(hi);
            let val = libm::sqrt(v.iter().map(|x| x * x).sum());
            let der = libm::sqrt(
                a.iter()
                    .zip(&b)
                    .map(|(x, y)| { let d = (y - x) / (hi - lo); d * d })
                    .sum(),
            );
            (val, der)
        })
        .collect();
    let mut best: f64 = 0.0;
    for &(vt, dt) in &norms {
        for &(vs, ds) in &norms {
            // ‖Φ‖_F = ‖φ(t)‖‖φ(s)‖ and ‖∇Φ‖ = √(‖φ′(t)‖²‖φ(s)‖² + ‖φ(t)‖²‖φ′(s)‖²).
            let val = vt * vs;
            let grad = libm::hypot(dt * vs, vt * ds);
            best = best.max(val).max(grad);
        }
    }
    best
}

/// Columns vec(Φ(θ_j)) with row index m·M + n.
pub fn design_matrix<B: Basis + ?Sized>(w: &B, grid: &[Point]) -> DMatrix<f64> {
    let m = w.len();
    let mut a = DMatrix::<f64>::zeros(m * m, grid.len());
    let mut ft = vec![0.0; m];
    let mut fs = vec![0.0; m];
    for (j, p) in grid.iter().enumerate() {
        w.eval_into(p.t, &mut ft);
        w.eval_into(p.s, &mut fs);
        for a_ in 0..m {
            for b in 0..m {
                a[(a_ * m + b, j)] = ft[a_] * fs[b];
            }
        }
    }
    a
}

/// Row-major flattening matching [`design_matrix`].
pub fn vectorize(y: &DMatrix<f64>) -> DVector<f64> {
    let (r, c) = y.shape();
    DVector::from_fn(r * c, |k, _| y[(k / c, k % c)])
}

pub fn unvectorize(v: &DVector<f64>, m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, m, |i, j| v[i * m + j])
}
