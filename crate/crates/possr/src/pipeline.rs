//! End-to-end runs: synthesize, observe, recover, score.

use std::path::Path;

use possr_core::certificates::{
    build_q0, build_q_noisy, error_bounds_check, error_constants, neighborhood_integrals, pattern_of,
    BoundsReport, CertOptions, Certificate, CertificateKind, VerificationReport,
};
use possr_core::imaging::{add_noise, forward, lipschitz};
use possr_core::measures::approximate_sparse;
use possr_core::solver::{recover, Grid, RecoverOptions, RecoveryResult};
use possr_core::{gen_wasserstein, AtomicMeasure, Basis, GroundNorm, ImageObservation};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Context, Result};
use crate::formats::{write_json, write_measure, write_observation};
use crate::scenario::{Scenario, Truth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureFile {
    pub what: String,
    pub t: f64,
    pub s: f64,
    pub value: f64,
    pub bound: f64,
}

/// Serializable form of a certificate's verification report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub kind: String,
    pub passed: bool,
    pub k: usize,
    pub m: usize,
    pub grid_n: usize,
    pub gbar: f64,
    pub b_norm: f64,
    pub max_error_on_support: f64,
    pub min_cross: Option<f64>,
    pub min_off: Option<f64>,
    pub min_near: Option<f64>,
    pub min_far: Option<f64>,
    pub min_slack: Option<f64>,
    pub epsilon: Option<f64>,
    pub pattern: Option<Vec<i8>>,
    pub lift: Option<f64>,
    pub failure: Option<FailureFile>,
}

impl From<&Certificate> for CertificateReport {
    fn from(c: &Certificate) -> Self {
        let r: &VerificationReport = &c.report;
        let (kind, epsilon, pattern, lift) = match &c.kind {
            CertificateKind::Noiseless => ("noiseless", None, None, None),
            CertificateKind::Noisy { epsilon } => ("noisy", Some(*epsilon), None, None),
            CertificateKind::Q0 {
                epsilon,
                pattern,
                lift,
            } => ("q0", Some(*epsilon), Some(pattern.clone()), Some(*lift)),
        };
        CertificateReport {
            kind: kind.to_string(),
            passed: r.passed,
            k: c.support.len(),
            m: c.window.len(),
            grid_n: r.grid_n,
            gbar: c.gbar,
            b_norm: c.b_norm(),
            max_error_on_support: r.max_error_on_support,
            min_cross: r.min_cross,
            min_off: r.min_off,
            min_near: r.min_near,
            min_far: r.min_far,
            min_slack: r.min_slack,
            epsilon,
            pattern,
            lift,
            failure: r.failure.as_ref().map(|f| FailureFile {
                what: f.what.clone(),
                t: f.t,
                s: f.s,
                value: f.value,
                bound: f.bound,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub passed: bool,
    pub q: Option<CertificateReport>,
    pub q0: Option<CertificateReport>,
    /// Construction error, when a certificate could not be built at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsFile {
    pub off_lhs: f64,
    pub off_rhs: f64,
    pub near_lhs: f64,
    pub near_rhs: f64,
    pub off_slack: f64,
    pub near_slack: f64,
    pub passed: bool,
}

impl From<BoundsReport> for BoundsFile {
    fn from(b: BoundsReport) -> Self {
        BoundsFile {
            off_lhs: b.off_lhs,
            off_rhs: b.off_rhs,
            near_lhs: b.near_lhs,
            near_rhs: b.near_rhs,
            off_slack: b.off_slack,
            near_slack: b.near_slack,
            passed: b.passed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    /// d_GW ≤ R + c1·δ′ + c2·ε from verified certificates.
    Theorem,
    /// Noiseless, R = 0: d_GW ≤ 2h·TV(x) + 1e-4.
    Grid,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub k: usize,
    pub m: usize,
    pub grid_n: usize,
    pub h: f64,
    pub delta: f64,
    pub noise_seed: u64,
    pub deltap: f64,
    pub deltap_rule: String,
    /// δ′ ≥ δ + L·R.
    pub deltap_precondition: bool,
    pub lipschitz: f64,
    pub epsilon: Option<f64>,
    pub sep: Option<f64>,
    pub tv: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub residual: f64,
    pub converged: bool,
    pub iterations: usize,
    pub recovered_atoms: usize,
    pub d_gw: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c1_lemma: Option<f64>,
    pub c3_lemma: Option<f64>,
    /// c1·δ + c2·ε + c3·R.
    pub theorem_rhs: Option<f64>,
    /// The right-hand side `bound_satisfied` compares against.
    pub bound_rhs: Option<f64>,
    pub bound_kind: BoundKind,
    pub bound_satisfied: Option<bool>,
    pub certificates: Option<CertificateSummary>,
    pub error_bounds: Option<BoundsFile>,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub report: PipelineReport,
    pub truth: AtomicMeasure,
    /// The sparse ε-separated approximation the certificates are built on.
    pub model: AtomicMeasure,
    pub observation: ImageObservation,
    pub recovery: RecoveryResult,
}

impl PipelineOutput {
    pub fn xhat(&self) -> &AtomicMeasure {
        &self.recovery.extracted
    }

    /// Writes x.json, y.csv, y.json, xhat.json and report.json into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| AppError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        write_measure(&dir.join("x.json"), &self.truth)?;
        write_observation(&dir.join("y.csv"), &self.observation)?;
        write_measure(&dir.join("xhat.json"), self.xhat())?;
        write_json(&dir.join("report.json"), &self.report)
    }

    /// Maps an unconverged solve or a failed certificate to its error.
    pub fn status(&self) -> Result<()> {
        let r = &self.report;
        if !r.converged {
            return Err(AppError::NotConverged {
                residual: r.residual,
                deltap: r.deltap,
            });
        }
        if let Some(c) = r.certificates.as_ref().filter(|c| !c.passed) {
            let why = c
                .error
                .clone()
                .or_else(|| c.q.as_ref().and_then(|q| q.failure.as_ref()).map(|f| f.what.clone()))
                .or_else(|| c.q0.as_ref().and_then(|q| q.failure.as_ref()).map(|f| f.what.clone()))
                .unwrap_or_else(|| "verification failed".into());
            return Err(AppError::Certificate(why));
        }
        Ok(())
    }
}

struct Certs {
    q: Option<Certificate>,
    q0: Option<Certificate>,
    error: Option<String>,
}

fn certificates_for(
    w: &possr_core::Window,
    model: &AtomicMeasure,
    zm: &AtomicMeasure,
    eps: f64,
) -> Certs {
    let opts = CertOptions::default();
    let q = match build_q_noisy(w, model, eps, &opts) {
        Ok(q) => q,
        Err(e) => {
            return Certs {
                q: None,
                q0: None,
                error: Some(e.to_string()),
            }
        }
    };
    let (inside, _) = neighborhood_integrals(zm, model, eps);
    let pattern = pattern_of(&inside);
    match build_q0(w, model, eps, &pattern, Some(&q), &opts) {
        Ok(q0) => Certs {
            q: Some(q),
            q0: Some(q0),
            error: None,
        },
        Err(e) => Certs {
            q: Some(q),
            q0: None,
            error: Some(e.to_string()),
        },
    }
}

pub fn run_pipeline(sc: &Scenario) -> Result<PipelineOutput> {
    let w = sc.window.build()?;
    let m = w.len();
    let truth = sc.truth.measure()?;
    let grid = Grid::new(sc.grid_n).context("grid")?;
    let norm: GroundNorm = sc.ground_norm.into();
    if sc.certificates && sc.epsilon.is_none() {
        return Err(AppError::Config("certificates need `epsilon`".into()));
    }
    if !(sc.deltap_floor >= 0.0) {
        return Err(AppError::Config("deltap_floor must be nonnegative".into()));
    }

    let observation = add_noise(&forward(&w, &truth), sc.delta, sc.noise_seed).context("noise")?;
    let k = sc.k.unwrap_or(truth.len());
    let (model, r) = match sc.epsilon {
        Some(eps) if !truth.is_empty() => {
            let a = approximate_sparse(&truth, k, eps, sc.lambda, norm).context("sparse approximation")?;
            (a.measure, a.residual)
        }
        _ => (truth.clone(), 0.0),
    };
    let lip = lipschitz(&w);
    let deltap = sc.deltap.rule().apply(sc.delta, lip, r).max(sc.deltap_floor);
    let deltap_precondition = deltap >= sc.delta + lip * r;

    let recovery = recover(&w, &observation, &grid, deltap, &RecoverOptions::default()).context("recovery")?;
    let (d_gw, _) = gen_wasserstein(&truth, &recovery.extracted, norm);
    let tv = truth.tv_norm();
    let sep = if truth.is_empty() { None } else { truth.sep().ok() };

    let mut report = PipelineReport {
        k: truth.len(),
        m,
        grid_n: sc.grid_n,
        h: grid.h(),
        delta: sc.delta,
        noise_seed: sc.noise_seed,
        deltap,
        deltap_rule: sc.deltap.name().to_string(),
        deltap_precondition,
        lipschitz: lip,
        epsilon: sc.epsilon,
        sep,
        tv,
        r,
        residual: recovery.residual,
        converged: recovery.converged,
        iterations: recovery.iterations,
        recovered_atoms: recovery.extracted.len(),
        d_gw,
        c1: None,
        c2: None,
        c3: None,
        c1_lemma: None,
        c3_lemma: None,
        theorem_rhs: None,
        bound_rhs: None,
        bound_kind: BoundKind::None,
        bound_satisfied: None,
        certificates: None,
        error_bounds: None,
    };

    if sc.certificates && !model.is_empty() {
        let eps = sc.epsilon.unwrap_or_default();
        let zm = recovery.z_measure();
        let certs = certificates_for(&w, &model, &zm, eps);
        let passed = certs.error.is_none()
            && certs.q.as_ref().is_some_and(|q| q.report.passed)
            && certs.q0.as_ref().is_some_and(|q| q.report.passed);
        if let (Some(q), Some(q0)) = (&certs.q, &certs.q0) {
            let c = error_constants(q, q0, lip, model.tv_norm());
            let theorem = c.c1 * sc.delta + c.c2 * eps + c.c3 * r;
            let rhs = r + c.c1 * deltap + c.c2 * eps;
            report.c1 = Some(c.c1);
            report.c2 = Some(c.c2);
            report.c3 = Some(c.c3);
            report.c1_lemma = Some(c.c1_lemma);
            report.c3_lemma = Some(c.c3_lemma);
            report.theorem_rhs = Some(theorem);
            report.error_bounds = Some(error_bounds_check(&zm, &model, eps, q, q0, deltap).into());
            if passed {
                report.bound_kind = BoundKind::Theorem;
                report.bound_rhs = Some(rhs);
                report.bound_satisfied = Some(d_gw <= rhs);
            }
        }
        report.certificates = Some(CertificateSummary {
            passed,
            q: certs.q.as_ref().map(CertificateReport::from),
            q0: certs.q0.as_ref().map(CertificateReport::from),
            error: certs.error,
        });
    }
    if report.bound_kind == BoundKind::None && sc.delta == 0.0 && r == 0.0 {
        let rhs = 2.0 * grid.h() * tv + 1e-4;
        report.bound_kind = BoundKind::Grid;
        report.bound_rhs = Some(rhs);
        report.bound_satisfied = Some(d_gw <= rhs);
    }

    Ok(PipelineOutput {
        report,
        truth,
        model,
        observation,
        recovery,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Delta,
    Epsilon,
    #[value(name = "M")]
    #[serde(rename = "M")]
    M,
    Sep,
}

/// The scenario of one sweep cell.
pub fn sweep_scenario(base: &Scenario, axis: SweepAxis, value: f64, rep: u64) -> Result<Scenario> {
    let mut sc = base.replicate(rep);
    match axis {
        SweepAxis::Delta => sc.delta = value,
        SweepAxis::Epsilon => sc.epsilon = Some(value),
        SweepAxis::M => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(AppError::Config(format!("M must be a positive integer, got {value}")));
            }
            sc.window = sc.window.with_len(value as usize)?;
        }
        SweepAxis::Sep => match &mut sc.truth {
            Truth::Generate { generate } => generate.sep_floor = value,
            Truth::Atoms(_) => return Err(AppError::Config("a sep sweep needs generated truth".into())),
        },
    }
    Ok(sc)
}

/// One aggregated sweep row. Means and maxima are over the runs that
/// completed; `failures` counts runs that returned an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub d_gw_mean: Option<f64>,
    pub d_gw_max: Option<f64>,
    pub residual: Option<f64>,
    pub theorem_rhs: Option<f64>,
    pub runs: usize,
    pub failures: usize,
    pub bound_violations: usize,
}

/// One sweep cell: its report, or the error message of a failed run.
pub type RunResult = std::result::Result<PipelineReport, String>;

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    /// Per value, per replicate: the report or the error message.
    pub runs: Vec<Vec<RunResult>>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn aggregate(value: f64, runs: &[RunResult]) -> SweepRow {
    let ok: Vec<&PipelineReport> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let d: Vec<f64> = ok.iter().map(|r| r.d_gw).collect();
    let res: Vec<f64> = ok.iter().map(|r| r.residual).collect();
    let rhs: Vec<f64> = ok.iter().filter_map(|r| r.theorem_rhs).collect();
    SweepRow {
        value,
        d_gw_mean: mean(&d),
        d_gw_max: d.iter().copied().reduce(f64::max),
        residual: mean(&res),
        theorem_rhs: mean(&rhs),
        runs: runs.len(),
        failures: runs.len() - ok.len(),
        bound_violations: ok.iter().filter(|r| r.bound_satisfied == Some(false)).count(),
    }
}

/// One pipeline per (value, replicate), run on at most `jobs` threads.
/// Replicate i offsets the scenario seeds by i.
pub fn run_sweep(base: &Scenario, axis: SweepAxis, values: &[f64], replicates: usize, jobs: usize) -> Result<SweepOutput> {
    if values.is_empty() {
        return Err(AppError::Config("sweep needs at least one value".into()));
    }
    if replicates == 0 {
        return Err(AppError::Config("sweep needs at least one replicate".into()));
    }
    let cells: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| (0..replicates as u64).map(move |r| (i, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AppError::Config(e.to_string()))?;
    let results: Vec<RunResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, rep)| {
                sweep_scenario(base, axis, values[i], rep)
                    .and_then(|sc| run_pipeline(&sc))
                    .map(|o| o.report)
                    .map_err(|e| e.to_string())
            })
            .collect()
    });
    let runs: Vec<Vec<_>> = results.chunks(replicates).map(<[_]>::to_vec).collect();
    let rows = values.iter().zip(&runs).map(|(v, r)| aggregate(*v, r)).collect();
    Ok(SweepOutput { rows, runs })
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| AppError::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    for row in rows {
        w.serialize(row).map_err(|e| AppError::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
    }
    w.flush().map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}
