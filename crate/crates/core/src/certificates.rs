//! Dual certificates Q and Q⁰ built from univariate interpolants, their
//! grid verification, and the constants of the error bound.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::imaging::{Basis, Window};
use crate::linalg::{frobenius, linspace, solve_min_norm};
use crate::measures::{AtomicMeasure, Point};

/// Largest support handled by the 2^K-term constructions.
pub const MAX_K: usize = 12;

/// Endpoint margins tried in order by [`univariate_dominating`].
pub const ETA_LADDER: [f64; 14] = [
    0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0, 1000.0,
];

/// q(t) = Σ_m b_m φ_m(t).
#[derive(Debug, Clone, PartialEq)]
pub struct UnivariatePoly {
    pub coef: Vec<f64>,
}

impl UnivariatePoly {
    pub fn eval<B: Basis + ?Sized>(&self, w: &B, t: f64) -> f64 {
        w.eval_vec(t).iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }

    pub fn deriv<B: Basis + ?Sized>(&self, w: &B, t: f64) -> f64 {
        w.deriv_vec(t).iter().zip(&self.coef).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.coef.iter().map(|c| c * c).sum())
    }
}

/// Piecewise-constant targets on the open interval.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Constant(f64),
    /// 0 within `radius` of any center, 1 elsewhere.
    Zeros { centers: Vec<f64>, radius: f64 },
    /// `level` within `radius` of `center`, 0 elsewhere.
    Plateau { center: f64, radius: f64, level: f64 },
}

impl Target {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Target::Constant(c) => *c,
            Target::Zeros { centers, radius } => {
                if centers.iter().any(|c| (t - c).abs() <= *radius) {
                    0.0
                } else {
                    1.0
                }
            }
            Target::Plateau {
                center,
                radius,
                level,
            } => {
                if (t - center).abs() <= *radius {
                    *level
                } else {
                    0.0
                }
            }
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            Target::Constant(c) => *c,
            Target::Zeros { .. } => 1.0,
            Target::Plateau { level, .. } => level.max(0.0),
        }
    }
}

fn interior_grid(n: usize) -> Vec<f64> {
    linspace(n)
        .into_iter()
        .filter(|&t| t > 0.0 && t < 1.0)
        .collect()
}

/// Solves the Hermite-type system given by `(t, value)` rows and
/// `(t, slope)` rows.
fn hermite<B: Basis + ?Sized>(
    w: &B,
    values: &[(f64, f64)],
    slopes: &[(f64, f64)],
) -> Result<UnivariatePoly> {
    let m = w.len();
    let rows = values.len() + slopes.len();
    let mut a = DMatrix::<f64>::zeros(rows, m);
    let mut rhs = DVector::<f64>::zeros(rows);
    let mut r = 0;
    for &(t, v) in values {
        a.row_mut(r).copy_from_slice(&w.eval_vec(t));
        rhs[r] = v;
        r += 1;
    }
    for &(t, v) in slopes {
        a.row_mut(r).copy_from_slice(&w.deriv_vec(t));
        rhs[r] = v;
        r += 1;
    }
    let b = solve_min_norm(&a, &rhs).ok_or(Error::Singular)?;
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(UnivariatePoly {
        coef: b.iter().copied().collect(),
    })
}

/// Polynomial with double zeros on `tprime` and q(anchor) = 1, verified
/// nonnegative on a `grid`-point mesh and vanishing only within 1e-3 of
/// `tprime`.
pub fn univariate_vanishing<B: Basis + ?Sized>(
    w: &B,
    tprime: &[f64],
    anchor: f64,
    grid: usize,
) -> Result<UnivariatePoly> {
    if w.len() < 2 * tprime.len() + 1 {
        return Err(invalid("need M ≥ 2|T′| + 1"));
    }
    if tprime.iter().any(|t| (t - anchor).abs() < 1e-12) {
        return Err(invalid("anchor must not belong to T′"));
    }
    let mut values: Vec<(f64, f64)> = tprime.iter().map(|&t| (t, 0.0)).collect();
    values.push((anchor, 1.0));
    let slopes: Vec<(f64, f64)> = tprime.iter().map(|&t| (t, 0.0)).collect();
    let q = hermite(w, &values, &slopes)?;
    for t in linspace(grid) {
        let v = q.eval(w, t);
        if v < -1e-9 {
            return Err(Error::Verification {
                what: String::from("vanishing polynomial is negative"),
                t,
                s: f64::NAN,
                value: v,
                bound: -1e-9,
            });
        }
        let near = tprime.iter().any(|c| (t - c).abs() <= 1e-3);
        if !near && v <= 1e-12 {
            return Err(Error::Verification {
                what: String::from("vanishing polynomial has an extra zero"),
                t,
                s: f64::NAN,
                value: v,
                bound: 1e-12,
            });
        }
    }
    Ok(q)
}

/// Polynomial with q = F and q′ = 0 on `support`, q(0) = q(1) = sup F + η,
/// verified q ≥ F − 1e-9 on the interior points of a `grid`-point mesh.
/// Tries every η of `ladder` in order and returns the first that verifies.
pub fn univariate_dominating<B: Basis + ?Sized>(
    w: &B,
    support: &[f64],
    f: &Target,
    ladder: &[f64],
    grid: usize,
) -> Result<(UnivariatePoly, f64)> {
    if w.len() < 2 * support.len() + 2 {
        return Err(invalid("need M ≥ 2|T| + 2"));
    }
    if ladder.is_empty() {
        return Err(invalid("empty margin ladder"));
    }
    let pts = interior_grid(grid);
    let target: Vec<f64> = pts.iter().map(|&t| f.eval(t)).collect();
    let mut worst: Option<(f64, f64, f64)> = None;
    for &eta in ladder {
        let end = f.sup() + eta;
        let mut values: Vec<(f64, f64)> = support.iter().map(|&t| (t, f.eval(t))).collect();
        values.push((0.0, end));
        values.push((1.0, end));
        let slopes: Vec<(f64, f64)> = support.iter().map(|&t| (t, 0.0)).collect();
        let Ok(q) = hermite(w, &values, &slopes) else {
            continue;
        };
        let mut violation: Option<(f64, f64, f64)> = None;
        for (&t, &ft) in pts.iter().zip(&target) {
            let v = q.eval(w, t);
            if v < ft - 1e-9 && violation.is_none_or(|(_, qv, fv)| v - ft < qv - fv) {
                violation = Some((t, v, ft));
            }
        }
        match violation {
            None => return Ok((q, eta)),
            Some(vi) => {
                if worst.is_none_or(|(_, qv, fv)| vi.1 - vi.2 > qv - fv) {
                    worst = Some(vi);
                }
            }
        }
    }
    let (t, value, bound) = worst.unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    Err(Error::Verification {
        what: String::from("dominating polynomial stays below its target"),
        t,
        s: f64::NAN,
        value,
        bound,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum CertificateKind {
    Noiseless,
    Noisy { epsilon: f64 },
    Q0 { epsilon: f64, pattern: Vec<i8>, lift: f64 },
}

/// One summand weight·q_t(t)·q_s(s) of the sum-of-products form.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub weight: f64,
    pub qt: UnivariatePoly,
    pub qs: UnivariatePoly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub what: String,
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub bound: f64,
}

/// Grid verification summary. Fields that do not apply to a certificate
/// kind are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerificationReport {
    pub passed: bool,
    pub grid_n: usize,
    /// max_k |Q(θ_k) − target_k|.
    pub max_error_on_support: f64,
    /// Noiseless: min Q over (T×S)\Θ.
    pub min_cross: Option<f64>,
    /// Noiseless: grid min outside the 1e-2 boxes. Noisy: grid min on Θ_ε^C.
    pub min_off: Option<f64>,
    /// Noisy: grid min on Θ_ε.
    pub min_near: Option<f64>,
    /// Noisy: grid min on T_ε^C × S_ε^C.
    pub min_far: Option<f64>,
    /// Q⁰: grid min of Q⁰ − G⁰.
    pub min_slack: Option<f64>,
    pub failure: Option<Failure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub b: DMatrix<f64>,
    pub kind: CertificateKind,
    pub gbar: f64,
    pub report: VerificationReport,
    pub terms: Vec<Term>,
    pub window: Window,
    pub support: Vec<Point>,
}

impl Certificate {
    /// Q(t,s) = Σ b_{mn} φ_m(t) φ_n(s).
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let a = DVector::from_vec(self.window.eval_vec(t));
        let c = DVector::from_vec(self.window.eval_vec(s));
        a.dot(&(&self.b * c))
    }

    /// The same value through the sum-of-products form.
    pub fn eval_terms(&self, t: f64, s: f64) -> f64 {
        self.terms
            .iter()
            .map(|term| term.weight * term.qt.eval(&self.window, t) * term.qs.eval(&self.window, s))
            .sum()
    }

    pub fn b_norm(&self) -> f64 {
        frobenius(&self.b)
    }

    /// Values on the n×n grid of nodes i/(n−1); entry (i, j) is Q(t_i, s_j).
    pub fn grid_values(&self, n: usize) -> DMatrix<f64> {
        let nodes = linspace(n);
        let m = self.window.len();
        let phi = DMatrix::from_fn(n, m, |i, k| self.window.eval_vec(nodes[i])[k]);
        &phi * &self.b * phi.transpose()
    }

    /// Turns a failed report into an error.
    pub fn into_verified(self) -> Result<Certificate> {
        if self.report.passed {
            return Ok(self);
        }
        let f = self.report.failure.clone().unwrap_or(Failure {
            what: String::from("verification failed"),
            t: f64::NAN,
            s: f64::NAN,
            value: f64::NAN,
            bound: f64::NAN,
        });
        Err(Error::Verification {
            what: f.what,
            t: f.t,
            s: f.s,
            value: f.value,
            bound: f.bound,
        })
    }
}

/// Options shared by the certificate constructions.
#[derive(Debug, Clone, PartialEq)]
pub struct CertOptions {
    /// Univariate verification mesh.
    pub grid_1d: usize,
    /// Bivariate verification mesh per axis.
    pub grid_2d: usize,
    /// Plateau half-width of the F-functions; `None` means ε.
    pub plateau_radius: Option<f64>,
    pub eta_ladder: Vec<f64>,
}

impl Default for CertOptions {
    fn default() -> Self {
        CertOptions {
            grid_1d: 2048,
            grid_2d: 512,
            plateau_radius: None,
            eta_ladder: ETA_LADDER.to_vec(),
        }
    }
}

fn check_support(support: &AtomicMeasure, m: usize, need: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = support.len();
    if k > MAX_K {
        return Err(Error::TooManyAtoms { limit: MAX_K, got: k });
    }
    if m < need {
        return Err(invalid(&format!("need M ≥ {need} for {k} atoms, window has {m}")));
    }
    let ts: Vec<f64> = support.atoms().iter().map(|a| a.loc.t).collect();
    let ss: Vec<f64> = support.atoms().iter().map(|a| a.loc.s).collect();
    Ok((ts, ss))
}

fn sorted(v: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = v.into_iter().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    v
}

/// A point of [0,1] as far as possible from every point of `pts`.
fn far_anchor(pts: &[f64]) -> f64 {
    let mut best = (0.0, -1.0);
    for c in linspace(1001) {
        let d = pts.iter().map(|p| (p - c).abs()).fold(f64::INFINITY, f64::min);
        if d > best.1 + 1e-15 {
            best = (c, d);
        }
    }
    best.0
}

fn outer_sum(terms: &[Term], m: usize) -> DMatrix<f64> {
    let mut b = DMatrix::<f64>::zeros(m, m);
    for term in terms {
        let u = DVector::from_column_slice(&term.qt.coef);
        let v = DVector::from_column_slice(&term.qs.coef);
        b += (&u * v.transpose()) * term.weight;
    }
    b
}

fn fail(report: &mut VerificationReport, what: &str, t: f64, s: f64, value: f64, bound: f64) {
    report.passed = false;
    if report.failure.is_none() {
        report.failure = Some(Failure {
            what: String::from(what),
            t,
            s,
            value,
            bound,
        });
    }
}

/// Noiseless certificate Σ_Ω q_{T_Ω}(t)·q_{S_{[K]\Ω}}(s) without verification
/// errors; the report records the outcome.
pub fn build_q_noiseless(w: &Window, support: &AtomicMeasure, opts: &CertOptions) -> Result<Certificate> {
    let k = support.len();
    let (ts, ss) = check_support(support, w.len(), 2 * k + 1)?;
    let anchor_t = far_anchor(&ts);
    let anchor_s = far_anchor(&ss);
    let mut terms = Vec::with_capacity(1 << k);
    for omega in 0..(1usize << k) {
        let comp = !omega & ((1 << k) - 1);
        let tw = sorted((0..k).filter(|i| omega >> i & 1 == 1).map(|i| ts[i]));
        let sw = sorted((0..k).filter(|i| comp >> i & 1 == 1).map(|i| ss[i]));
        terms.push(Term {
            weight: 1.0,
            qt: univariate_vanishing(w, &tw, anchor_t, opts.grid_1d)?,
            qs: univariate_vanishing(w, &sw, anchor_s, opts.grid_1d)?,
        });
    }
    let b = outer_sum(&terms, w.len());
    let mut cert = Certificate {
        b,
        kind: CertificateKind::Noiseless,
        gbar: 0.0,
        report: VerificationReport::default(),
        terms,
        window: w.clone(),
        support: support.locations(),
    };
    cert.report = verify_noiseless(&cert, opts.grid_2d);
    Ok(cert)
}

/// [`build_q_noiseless`] followed by a verification check.
pub fn assemble_q_noiseless(w: &Window, support: &AtomicMeasure, opts: &CertOptions) -> Result<Certificate> {
    build_q_noiseless(w, support, opts)?.into_verified()
}

fn verify_noiseless(c: &Certificate, n: usize) -> VerificationReport {
    let mut r = VerificationReport {
        passed: true,
        grid_n: n,
        ..Default::default()
    };
    for p in &c.support {
        let v = c.eval(p.t, p.s);
        r.max_error_on_support = r.max_error_on_support.max(v.abs());
        if v.abs() > 1e-8 {
            fail(&mut r, "Q does not vanish on the support", p.t, p.s, v, 1e-8);
        }
    }
    let mut min_cross = f64::INFINITY;
    for a in &c.support {
        for b in &c.support {
            let p = Point::new(a.t, b.s);
            if c.support.iter().any(|q| q.max_dist(&p) <= 1e-12) {
                continue;
            }
            let v = c.eval(p.t, p.s);
            min_cross = min_cross.min(v);
            if v <= 0.0 {
                fail(&mut r, "Q vanishes at a cross point", p.t, p.s, v, 0.0);
            }
        }
    }
    r.min_cross = Some(min_cross);
    let nodes = linspace(n);
    let vals = c.grid_values(n);
    let mut min_off = f64::INFINITY;
    let mut at = (f64::NAN, f64::NAN);
    for i in 0..n {
        for j in 0..n {
            let p = Point::new(nodes[i], nodes[j]);
            if c.support.iter().any(|q| q.max_dist(&p) <= 1e-2) {
                continue;
            }
            if vals[(i, j)] < min_off {
                min_off = vals[(i, j)];
                at = (p.t, p.s);
            }
        }
    }
    r.min_off = Some(min_off);
    if !(min_off > 0.0) {
        fail(&mut r, "Q is not positive away from the support", at.0, at.1, min_off, 0.0);
    }
    r
}

fn plateau(opts: &CertOptions, epsilon: f64) -> f64 {
    opts.plateau_radius.unwrap_or(epsilon)
}

fn check_noisy_pre(support: &AtomicMeasure, epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    if !support.is_empty() && support.sep()? < epsilon {
        return Err(invalid("support separation is below epsilon"));
    }
    Ok(())
}

/// Noisy certificate built from dominating interpolants of F_{T_Ω} and
/// F_{S_{[K]\Ω}}; the report records the grid checks.
pub fn build_q_noisy(
    w: &Window,
    support: &AtomicMeasure,
    epsilon: f64,
    opts: &CertOptions,
) -> Result<Certificate> {
    let k = support.len();
    let (ts, ss) = check_support(support, w.len(), 2 * k + 2)?;
    check_noisy_pre(support, epsilon)?;
    let radius = plateau(opts, epsilon);
    let st = sorted(ts.iter().copied());
    let sss = sorted(ss.iter().copied());
    let mut terms = Vec::with_capacity(1 << k);
    for omega in 0..(1usize << k) {
        let comp = !omega & ((1 << k) - 1);
        let ft = Target::Zeros {
            centers: sorted((0..k).filter(|i| omega >> i & 1 == 1).map(|i| ts[i])),
            radius,
        };
        let fs = Target::Zeros {
            centers: sorted((0..k).filter(|i| comp >> i & 1 == 1).map(|i| ss[i])),
            radius,
        };
        terms.push(Term {
            weight: 1.0,
            qt: univariate_dominating(w, &st, &ft, &opts.eta_ladder, opts.grid_1d)?.0,
            qs: univariate_dominating(w, &sss, &fs, &opts.eta_ladder, opts.grid_1d)?.0,
        });
    }
    let gbar = libm::pow(2.0, k as f64 - 2.0);
    let b = outer_sum(&terms, w.len());
    let mut cert = Certificate {
        b,
        kind: CertificateKind::Noisy { epsilon },
        gbar,
        report: VerificationReport::default(),
        terms,
        window: w.clone(),
        support: support.locations(),
    };
    cert.report = verify_noisy(&cert, epsilon, opts.grid_2d);
    Ok(cert)
}

pub fn assemble_q_noisy(
    w: &Window,
    support: &AtomicMeasure,
    epsilon: f64,
    opts: &CertOptions,
) -> Result<Certificate> {
    build_q_noisy(w, support, epsilon, opts)?.into_verified()
}

fn verify_noisy(c: &Certificate, eps: f64, n: usize) -> VerificationReport {
    let mut r = VerificationReport {
        passed: true,
        grid_n: n,
        ..Default::default()
    };
    for p in &c.support {
        let v = c.eval(p.t, p.s);
        r.max_error_on_support = r.max_error_on_support.max(v.abs());
        if v.abs() > 1e-8 {
            fail(&mut r, "Q does not vanish on the support", p.t, p.s, v, 1e-8);
        }
    }
    let k = c.support.len() as f64;
    let far_bound = libm::pow(2.0, k) * (1.0 - 1e-6);
    let off_bound = c.gbar * (1.0 - 1e-6);
    let nodes = linspace(n);
    let vals = c.grid_values(n);
    let (mut near, mut off, mut far) = (f64::INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut near_at, mut off_at, mut far_at) = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0));
    for i in 0..n {
        for j in 0..n {
            let p = Point::new(nodes[i], nodes[j]);
            let v = vals[(i, j)];
            if c.support.iter().any(|q| q.max_dist(&p) <= eps) {
                if v < near {
                    near = v;
                    near_at = (p.t, p.s);
                }
                continue;
            }
            if v < off {
                off = v;
                off_at = (p.t, p.s);
            }
            let t_far = c.support.iter().all(|q| (q.t - p.t).abs() > eps);
            let s_far = c.support.iter().all(|q| (q.s - p.s).abs() > eps);
            if t_far && s_far && v < far {
                far = v;
                far_at = (p.t, p.s);
            }
        }
    }
    if near < -1e-8 {
        fail(&mut r, "Q is negative near the support", near_at.0, near_at.1, near, -1e-8);
    }
    if off < off_bound {
        fail(&mut r, "Q is below gbar away from the support", off_at.0, off_at.1, off, off_bound);
    }
    if far < far_bound {
        fail(&mut r, "Q is below 2^K off both axis neighborhoods", far_at.0, far_at.1, far, far_bound);
    }
    r.min_near = near.is_finite().then_some(near);
    r.min_off = off.is_finite().then_some(off);
    r.min_far = far.is_finite().then_some(far);
    r
}

/// G⁰(θ): the largest π_k over the boxes θ_{k,ε} containing θ, 0 outside.
pub fn g0_target(support: &[Point], pattern: &[i8], eps: f64, p: &Point) -> f64 {
    let mut best: Option<f64> = None;
    for (q, &s) in support.iter().zip(pattern) {
        if q.max_dist(p) <= eps {
            let v = s as f64;
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best.unwrap_or(0.0)
}

/// Q⁰ for sign pattern `pattern`: Σ_k q_T^{k,π_k}(t)·q_S^{k,+}(s), lifted by
/// a multiple of the noisy certificate `q` wherever that sum falls below G⁰.
pub fn build_q0(
    w: &Window,
    support: &AtomicMeasure,
    epsilon: f64,
    pattern: &[i8],
    q: Option<&Certificate>,
    opts: &CertOptions,
) -> Result<Certificate> {
    let k = support.len();
    let (ts, ss) = check_support(support, w.len(), 2 * k + 2)?;
    check_noisy_pre(support, epsilon)?;
    if pattern.len() != k || pattern.iter().any(|s| *s != 1 && *s != -1) {
        return Err(invalid("sign pattern must hold one ±1 per atom"));
    }
    let radius = plateau(opts, epsilon);
    let st = sorted(ts.iter().copied());
    let sss = sorted(ss.iter().copied());
    let mut terms = Vec::with_capacity(k + 1);
    for i in 0..k {
        let ft = Target::Plateau {
            center: ts[i],
            radius,
            level: pattern[i] as f64,
        };
        let fs = Target::Plateau {
            center: ss[i],
            radius,
            level: 1.0,
        };
        let (qt, _) = univariate_dominating(w, &st, &ft, &opts.eta_ladder, opts.grid_1d)?;
        let (qs, _) = univariate_dominating(w, &sss, &fs, &opts.eta_ladder, opts.grid_1d)?;
        terms.push(Term { weight: 1.0, qt, qs });
    }
    let support_pts = support.locations();
    let n = opts.grid_2d;
    let nodes = linspace(n);
    let mut cert = Certificate {
        b: outer_sum(&terms, w.len()),
        kind: CertificateKind::Q0 {
            epsilon,
            pattern: pattern.to_vec(),
            lift: 0.0,
        },
        gbar: 0.0,
        report: VerificationReport::default(),
        terms,
        window: w.clone(),
        support: support_pts.clone(),
    };

    let p_vals = cert.grid_values(n);
    let mut needs_lift = false;
    for i in 0..n {
        for j in 0..n {
            let g = g0_target(&support_pts, pattern, epsilon, &Point::new(nodes[i], nodes[j]));
            if p_vals[(i, j)] < g - 1e-8 {
                needs_lift = true;
            }
        }
    }
    if needs_lift {
        let owned;
        let qc = match q {
            Some(qc) => qc,
            None => {
                owned = build_q_noisy(w, support, epsilon, opts)?;
                &owned
            }
        };
        let q_vals = qc.grid_values(n);
        let mut c: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let g = g0_target(&support_pts, pattern, epsilon, &Point::new(nodes[i], nodes[j]));
                let gap = g - p_vals[(i, j)];
                if gap > 0.0 && q_vals[(i, j)] > 1e-9 {
                    c = c.max(gap / q_vals[(i, j)]);
                }
            }
        }
        let lift = c * (1.0 + 1e-3) + 1e-12;
        for term in &qc.terms {
            cert.terms.push(Term {
                weight: term.weight * lift,
                qt: term.qt.clone(),
                qs: term.qs.clone(),
            });
        }
        cert.b += &qc.b * lift;
        cert.kind = CertificateKind::Q0 {
            epsilon,
            pattern: pattern.to_vec(),
            lift,
        };
    }
    cert.report = verify_q0(&cert, epsilon, pattern, n);
    Ok(cert)
}

pub fn assemble_q0(
    w: &Window,
    support: &AtomicMeasure,
    epsilon: f64,
    pattern: &[i8],
    q: Option<&Certificate>,
    opts: &CertOptions,
) -> Result<Certificate> {
    build_q0(w, support, epsilon, pattern, q, opts)?.into_verified()
}

fn verify_q0(c: &Certificate, eps: f64, pattern: &[i8], n: usize) -> VerificationReport {
    let mut r = VerificationReport {
        passed: true,
        grid_n: n,
        ..Default::default()
    };
    for (p, &s) in c.support.iter().zip(pattern) {
        let v = c.eval(p.t, p.s);
        let e = (v - s as f64).abs();
        r.max_error_on_support = r.max_error_on_support.max(e);
        if e > 1e-8 {
            fail(&mut r, "Q0 differs from the sign on the support", p.t, p.s, v, s as f64);
        }
    }
    let nodes = linspace(n);
    let vals = c.grid_values(n);
    let mut slack = f64::INFINITY;
    let mut at = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = Point::new(nodes[i], nodes[j]);
            let g = g0_target(&c.support, pattern, eps, &p);
            let d = vals[(i, j)] - g;
            if d < slack {
                slack = d;
                at = (p.t, p.s, vals[(i, j)], g);
            }
        }
    }
    r.min_slack = Some(slack);
    if slack < -1e-8 {
        fail(&mut r, "Q0 is below its target", at.0, at.1, at.2, at.3);
    }
    r
}

/// Constants of the error bound d_GW(x, x̂) ≤ c1·δ + c2·ε + c3·R.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// (6 + 2/ḡ)‖b‖_F + 6‖b⁰‖_F.
    pub c1_lemma: f64,
    /// L·c1_lemma + 1.
    pub c3_lemma: f64,
}

pub fn error_constants(q: &Certificate, q0: &Certificate, lipschitz: f64, tv_xkeps: f64) -> ErrorConstants {
    let nb = q.b_norm();
    let nb0 = q0.b_norm();
    let c1 = 10.0 * nb + 6.0 * nb0;
    let c1_lemma = if q.gbar > 0.0 {
        (6.0 + 2.0 / q.gbar) * nb + 6.0 * nb0
    } else {
        f64::INFINITY
    };
    ErrorConstants {
        c1,
        c2: tv_xkeps / 2.0,
        c3: lipschitz * c1 + 1.0,
        c1_lemma,
        c3_lemma: lipschitz * c1_lemma + 1.0,
    }
}

/// Left- and right-hand sides of the two certificate inequalities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    /// ∫ over Θ_ε^C of h.
    pub off_lhs: f64,
    /// 2‖b‖_F δ′ / ḡ.
    pub off_rhs: f64,
    /// Σ_k |∫ over θ_{k,ε} of h|.
    pub near_lhs: f64,
    /// 2(‖b‖_F + ‖b⁰‖_F) δ′.
    pub near_rhs: f64,
    pub off_slack: f64,
    pub near_slack: f64,
    pub passed: bool,
}

/// Masses ∫_{θ_{k,ε}} h with h = x̂ − x_{K,ε}, each point counted in the
/// first box that contains it, plus the mass of h outside all boxes.
pub fn neighborhood_integrals(xhat: &AtomicMeasure, xkeps: &AtomicMeasure, eps: f64) -> (Vec<f64>, f64) {
    let centers = xkeps.locations();
    let mut inside = vec![0.0; centers.len()];
    let mut outside = 0.0;
    let mut add = |p: &Point, w: f64| match centers.iter().position(|c| c.max_dist(p) <= eps) {
        Some(k) => inside[k] += w,
        None => outside += w,
    };
    for a in xhat.atoms() {
        add(&a.loc, a.weight);
    }
    for a in xkeps.atoms() {
        add(&a.loc, -a.weight);
    }
    (inside, outside)
}

/// Sign pattern of the neighbourhood integrals: +1 when positive, −1 otherwise.
pub fn pattern_of(integrals: &[f64]) -> Vec<i8> {
    integrals.iter().map(|v| if *v > 0.0 { 1 } else { -1 }).collect()
}

/// Checks ∫_{Θ_ε^C} h ≤ 2‖b‖δ′/ḡ and Σ_k |∫_{θ_{k,ε}} h| ≤ 2(‖b‖+‖b⁰‖)δ′.
pub fn error_bounds_check(
    xhat: &AtomicMeasure,
    xkeps: &AtomicMeasure,
    eps: f64,
    q: &Certificate,
    q0: &Certificate,
    deltap: f64,
) -> BoundsReport {
    let (inside, outside) = neighborhood_integrals(xhat, xkeps, eps);
    let nb = q.b_norm();
    let nb0 = q0.b_norm();
    let off_rhs = if q.gbar > 0.0 {
        2.0 * nb * deltap / q.gbar
    } else {
        f64::INFINITY
    };
    let near_lhs: f64 = inside.iter().map(|v| v.abs()).sum();
    let near_rhs = 2.0 * (nb + nb0) * deltap;
    let off_slack = off_rhs - outside;
    let near_slack = near_rhs - near_lhs;
    BoundsReport {
        off_lhs: outside,
        off_rhs,
        near_lhs,
        near_rhs,
        off_slack,
        near_slack,
        passed: off_slack >= 0.0 && near_slack >= 0.0,
    }
}
