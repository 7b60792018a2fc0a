//! Sampled checks of the T-system property and a finite-n proxy of the
//! T*-system property over admissible sequences.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::certificates::Target;
use crate::error::{invalid, Error, Result};
use crate::imaging::Basis;
use crate::linalg::{normalize_cols, normalize_rows, sign_log_det};

/// Smallest accepted magnitude of a normalised collocation determinant.
pub const TSYSTEM_MIN_DET: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TsystemReport {
    pub passed: bool,
    pub trials: usize,
    pub positive: usize,
    pub negative: usize,
    pub singular: usize,
    /// Trials whose normalised determinant is below [`TSYSTEM_MIN_DET`].
    pub below_threshold: usize,
    /// log10 of the smallest normalised |det|.
    pub min_log10_det: f64,
    pub worst_sequence: Vec<f64>,
}

/// Collocation matrix [φ_m(τ_k)] with rows indexed by k.
fn collocation<B: Basis + ?Sized>(w: &B, tau: &[f64]) -> DMatrix<f64> {
    let m = w.len();
    let mut a = DMatrix::zeros(tau.len(), m);
    let mut row = alloc::vec![0.0; m];
    for (k, &t) in tau.iter().enumerate() {
        w.eval_into(t, &mut row);
        a.row_mut(k).copy_from_slice(&row);
    }
    a
}

/// Sign and log10 of det[φ_m(τ_k)] after four rounds of row and column
/// max-abs equilibration, divided by Π_{i<j}(τ_j − τ_i).
pub fn normalized_det<B: Basis + ?Sized>(w: &B, tau: &[f64]) -> (f64, f64) {
    let mut a = collocation(w, tau);
    for _ in 0..4 {
        normalize_rows(&mut a);
        normalize_cols(&mut a);
    }
    let (sign, ld) = sign_log_det(&a);
    if sign == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let mut gaps = 0.0;
    for i in 0..tau.len() {
        for j in i + 1..tau.len() {
            gaps += libm::log(tau[j] - tau[i]);
        }
    }
    (sign, (ld - gaps) / core::f64::consts::LN_10)
}

/// Draws `trials` uniformly random increasing sequences of length M and
/// checks that every normalised determinant exceeds [`TSYSTEM_MIN_DET`] in
/// magnitude with one common sign.
pub fn check_tsystem<B: Basis + ?Sized>(w: &B, trials: usize, seed: u64) -> Result<TsystemReport> {
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let m = w.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = TsystemReport {
        passed: false,
        trials,
        positive: 0,
        negative: 0,
        singular: 0,
        below_threshold: 0,
        min_log10_det: f64::INFINITY,
        worst_sequence: Vec::new(),
    };
    let floor = libm::log10(TSYSTEM_MIN_DET);
    let mut tau = alloc::vec![0.0; m];
    for _ in 0..trials {
        loop {
            for t in tau.iter_mut() {
                *t = rng.random::<f64>();
            }
            tau.sort_by(|a, b| a.total_cmp(b));
            if tau.windows(2).all(|p| p[0] < p[1]) {
                break;
            }
        }
        let (sign, l10) = normalized_det(w, &tau);
        if sign > 0.0 {
            r.positive += 1;
        } else if sign < 0.0 {
            r.negative += 1;
        } else {
            r.singular += 1;
        }
        if !(l10 > floor) {
            r.below_threshold += 1;
        }
        if l10 < r.min_log10_det || r.worst_sequence.is_empty() {
            r.min_log10_det = l10;
            r.worst_sequence = tau.clone();
        }
    }
    r.passed = r.singular == 0 && r.below_threshold == 0 && (r.positive == 0 || r.negative == 0);
    Ok(r)
}

/// Limit points with multiplicities, all even except the singleton at
/// index `singleton`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSequence {
    pub limits: Vec<(f64, usize)>,
    pub singleton: usize,
    pub m: usize,
    pub h0: f64,
}

impl AdmissibleSequence {
    pub fn h(&self, n: usize) -> f64 {
        self.h0 / n as f64
    }

    /// τ^n: 0, 1 and the clusters τ, τ+h_n, ..., τ+(mult−1)h_n, sorted.
    pub fn nodes(&self, n: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(invalid("n must be positive"));
        }
        let h = self.h(n);
        let mut out = Vec::with_capacity(self.m + 1);
        out.push(0.0);
        out.push(1.0);
        for &(p, mult) in &self.limits {
            for i in 0..mult {
                out.push(p + i as f64 * h);
            }
        }
        out.sort_by(|a, b| a.total_cmp(b));
        if !out.windows(2).all(|p| p[0] < p[1]) || out.len() != self.m + 1 {
            return Err(invalid("generated nodes are not strictly increasing"));
        }
        Ok(out)
    }

    /// Position of the singleton node within every generated sequence.
    pub fn singleton_row(&self) -> usize {
        let p = self.limits[self.singleton].0;
        1 + self
            .limits
            .iter()
            .filter(|(q, _)| *q < p)
            .map(|(_, mult)| mult)
            .sum::<usize>()
    }
}

pub fn make_admissible(limits: &[(f64, usize)], singleton: usize, m: usize, h0: f64) -> Result<AdmissibleSequence> {
    if !m.is_multiple_of(2) {
        return Err(invalid("M must be even"));
    }
    if !(h0 > 0.0) {
        return Err(invalid("h0 must be positive"));
    }
    if singleton >= limits.len() {
        return Err(Error::IndexOutOfRange {
            index: singleton,
            len: limits.len(),
        });
    }
    let total: usize = limits.iter().map(|l| l.1).sum();
    if total + 1 != m {
        return Err(invalid("multiplicities must sum to M − 1"));
    }
    for (i, &(p, mult)) in limits.iter().enumerate() {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("limit points must be interior"));
        }
        let want_odd = i == singleton;
        if want_odd && mult != 1 {
            return Err(invalid("the singleton must have multiplicity 1"));
        }
        if !want_odd && (mult == 0 || mult % 2 != 0) {
            return Err(invalid("all multiplicities but one must be even"));
        }
    }
    let mut pts: Vec<f64> = limits.iter().map(|l| l.0).collect();
    pts.sort_by(|a, b| a.total_cmp(b));
    let span = limits.iter().map(|l| l.1).max().unwrap_or(1) as f64 * h0;
    if pts.windows(2).any(|p| p[1] - p[0] <= span) || pts.last().is_some_and(|p| p + span >= 1.0) {
        return Err(invalid("limit points are too close for clusters of width h0"));
    }
    Ok(AdmissibleSequence {
        limits: limits.to_vec(),
        singleton,
        m,
        h0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TstarStep {
    pub n: usize,
    pub det_sign: f64,
    /// log10 of |det| after row scaling and division by Π h_n^{m(m−1)/2}.
    pub log10_det: f64,
    /// log |minor_j| along the singleton row, j = 0..=M; −∞ when singular.
    pub log_minors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TstarReport {
    pub passed: bool,
    pub part1: bool,
    pub part2: bool,
    pub part2_applicable: bool,
    /// Normalised determinant at the largest n.
    pub final_det: f64,
    pub slopes: Vec<f64>,
    pub slope_spread: f64,
    pub steps: Vec<TstarStep>,
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Part 1: det[ψ_m(τ_k^n)] ≥ −tol at the largest n, with ψ_0 = F (value
/// `endpoint` at 0 and 1) and ψ_m = φ_m. Part 2: least-squares slopes of
/// log|minor| against log n along the singleton row agree within 0.1.
pub fn check_tstar<B: Basis + ?Sized>(
    f: &Target,
    endpoint: f64,
    w: &B,
    seq: &AdmissibleSequence,
    n_values: &[usize],
    tol: f64,
) -> Result<TstarReport> {
    if w.len() != seq.m {
        return Err(invalid("window size differs from the sequence M"));
    }
    if n_values.len() < 4 || n_values.windows(2).any(|p| p[0] >= p[1]) {
        return Err(invalid("n_values needs at least four increasing entries"));
    }
    let m = seq.m;
    let row = seq.singleton_row();
    let mut steps = Vec::with_capacity(n_values.len());
    for &n in n_values {
        let tau = seq.nodes(n)?;
        let phi = collocation(w, &tau);
        let mut a = DMatrix::zeros(m + 1, m + 1);
        for (k, &t) in tau.iter().enumerate() {
            a[(k, 0)] = if t <= 0.0 || t >= 1.0 { endpoint } else { f.eval(t) };
            for j in 0..m {
                a[(k, j + 1)] = phi[(k, j)];
            }
        }
        normalize_rows(&mut a);
        let (sign, ld) = sign_log_det(&a);
        let h = seq.h(n);
        let scale: f64 = seq
            .limits
            .iter()
            .map(|&(_, mult)| (mult * mult.saturating_sub(1)) as f64 / 2.0 * libm::log(h))
            .sum();
        let log_minors = (0..=m)
            .map(|j| {
                let minor = a.clone().remove_row(row).remove_column(j);
                let (s, l) = sign_log_det(&minor);
                if s == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    l
                }
            })
            .collect();
        steps.push(TstarStep {
            n,
            det_sign: sign,
            log10_det: if sign == 0.0 {
                f64::NEG_INFINITY
            } else {
                (ld - scale) / core::f64::consts::LN_10
            },
            log_minors,
        });
    }
    let last = steps.last().ok_or(Error::Singular)?;
    let final_det = last.det_sign * libm::pow(10.0, last.log10_det);
    let part1 = final_det.is_finite() && final_det >= -tol;
    let part2_applicable = steps
        .iter()
        .all(|s| s.log_minors.iter().all(|l| l.is_finite()));
    let mut slopes = Vec::new();
    let mut spread = f64::NAN;
    if part2_applicable {
        let x: Vec<f64> = n_values.iter().map(|&n| libm::log(n as f64)).collect();
        for j in 0..=m {
            let y: Vec<f64> = steps.iter().map(|s| s.log_minors[j]).collect();
            slopes.push(slope(&x, &y));
        }
        let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
        spread = hi - lo;
    }
    let part2 = part2_applicable && spread <= 0.1;
    Ok(TstarReport {
        passed: part1 && part2,
        part1,
        part2,
        part2_applicable,
        final_det,
        slopes,
        slope_spread: spread,
        steps,
    })
}
