//! The `possr` command line.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use possr_core::certificates::{
    build_q0, build_q_noiseless, build_q_noisy, univariate_dominating, CertOptions, Target, ETA_LADDER,
};
use possr_core::chebyshev::{check_tstar, check_tsystem, make_admissible};
use possr_core::imaging::{add_noise, forward};
use possr_core::solver::{recover, Grid, NnlsMethod, RecoverOptions};
use possr_core::{gen_wasserstein, GroundNorm};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, Context, Result};
use crate::formats::{
    read_json, read_measure, read_observation, read_window, to_json_string, write_json, write_matrix_csv,
    write_measure, write_observation, NormName,
};
use crate::pipeline::{run_pipeline, run_sweep, write_sweep_csv, CertificateReport, SweepAxis};
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "possr", version, about = "Positive super-resolution experiments")]
pub struct Cli {
    /// Scenario JSON (pipeline, sweep).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for sweeps.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Image a measure, optionally adding noise of Frobenius norm δ.
    Forward(ForwardArgs),
    /// Solve the gridded feasibility problem and extract atoms.
    Recover(RecoverArgs),
    /// Generalized Wasserstein distance between two measures.
    Distance(DistanceArgs),
    /// Build and verify a dual certificate.
    Certificate(CertificateArgs),
    /// T-system or T*-system check of a window.
    Tcheck(TcheckArgs),
    /// Run one scenario end to end.
    Pipeline,
    /// Run a scenario over a list of values of one parameter.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long)]
    pub window: PathBuf,
    #[arg(long)]
    pub measure: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MethodArg {
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    #[arg(long)]
    pub window: PathBuf,
    #[arg(long)]
    pub obs: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub grid_n: usize,
    /// Feasibility radius; defaults to max(δ, 1e-8).
    #[arg(long)]
    pub deltap: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::ActiveSet)]
    pub method: MethodArg,
}

#[derive(Debug, Args)]
pub struct DistanceArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    pub norm: NormArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    L2,
    Linf,
    L1,
}

impl From<NormArg> for GroundNorm {
    fn from(n: NormArg) -> Self {
        let name = match n {
            NormArg::L2 => NormName::L2,
            NormArg::Linf => NormName::Linf,
            NormArg::L1 => NormName::L1,
        };
        name.into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CertKind {
    Noiseless,
    Noisy,
    Q0,
}

#[derive(Debug, Args)]
pub struct CertificateArgs {
    #[arg(long)]
    pub window: PathBuf,
    /// Measure JSON whose atom locations form the support.
    #[arg(long)]
    pub support: PathBuf,
    #[arg(long, value_enum, default_value_t = CertKind::Noiseless)]
    pub kind: CertKind,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Signs for Q⁰, one per atom, e.g. `1,-1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub pattern: Vec<i8>,
    /// Heat-map resolution per axis.
    #[arg(long, default_value_t = 512)]
    pub heatmap_n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TcheckMode {
    Tsystem,
    Tstar,
}

#[derive(Debug, Args)]
pub struct TcheckArgs {
    #[arg(long)]
    pub window: PathBuf,
    #[arg(long, value_enum, default_value_t = TcheckMode::Tsystem)]
    pub mode: TcheckMode,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    /// Admissible-sequence description for `tstar`.
    #[arg(long)]
    pub pattern: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    pub axis: SweepAxis,
    #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
    pub values: Vec<f64>,
    /// Replicates per value; replicate i offsets the seeds by i.
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
}

/// Admissible sequence and target for `tcheck --mode tstar`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TstarPattern {
    /// (limit point, multiplicity) pairs; one multiplicity-1 entry.
    pub limits: Vec<(f64, usize)>,
    pub singleton: usize,
    #[serde(default = "default_h0")]
    pub h0: f64,
    /// Zero plateaus of F, each of half-width `radius`.
    #[serde(default)]
    pub zeros: Vec<f64>,
    #[serde(default = "default_radius")]
    pub radius: f64,
    /// Value at 0 and 1; defaults to sup F + η from the interpolation ladder.
    #[serde(default)]
    pub endpoint: Option<f64>,
    #[serde(default = "default_sizes")]
    pub n: Vec<usize>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_h0() -> f64 {
    0.01
}

fn default_radius() -> f64 {
    0.1
}

fn default_sizes() -> Vec<usize> {
    vec![4, 8, 16, 32]
}

fn default_tol() -> f64 {
    1e-9
}

#[derive(Debug, Serialize)]
struct DistanceOut {
    d_gw: f64,
    transported_mass: f64,
    destroyed: f64,
    created: f64,
}

#[derive(Debug, Serialize)]
struct RecoverOut {
    residual: f64,
    deltap: f64,
    converged: bool,
    iterations: usize,
    atoms: usize,
}

#[derive(Debug, Serialize)]
struct TsystemOut {
    mode: &'static str,
    passed: bool,
    trials: usize,
    positive: usize,
    negative: usize,
    singular: usize,
    below_threshold: usize,
    min_log10_det: f64,
    worst_sequence: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TstarStepOut {
    n: usize,
    det_sign: f64,
    log10_det: f64,
    log_minors: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct TstarOut {
    mode: &'static str,
    passed: bool,
    part1: bool,
    part2: bool,
    part2_applicable: bool,
    endpoint: f64,
    final_det: f64,
    slopes: Vec<f64>,
    slope_spread: f64,
    tol: f64,
    steps: Vec<TstarStepOut>,
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| AppError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn emit<T: Serialize>(cli: &Cli, v: &T, default_file: Option<&str>) -> Result<()> {
    print!("{}", to_json_string(v));
    match (&cli.out, default_file) {
        (Some(dir), Some(name)) => {
            ensure_dir(dir)?;
            write_json(&dir.join(name), v)
        }
        (Some(file), None) => write_json(file, v),
        _ => Ok(()),
    }
}

fn load_scenario(cli: &Cli) -> Result<Scenario> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::Config("--config <scenario.json> is required".into()))?;
    let mut sc: Scenario = read_json(path)?;
    if let Some(seed) = cli.seed {
        sc.reseed(seed);
    }
    Ok(sc)
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Forward(a) => forward_cmd(cli, a),
        Command::Recover(a) => recover_cmd(cli, a),
        Command::Distance(a) => distance_cmd(cli, a),
        Command::Certificate(a) => certificate_cmd(cli, a),
        Command::Tcheck(a) => tcheck_cmd(cli, a),
        Command::Pipeline => pipeline_cmd(cli),
        Command::Sweep(a) => sweep_cmd(cli, a),
    }
}

fn forward_cmd(cli: &Cli, a: &ForwardArgs) -> Result<()> {
    let w = read_window(&a.window)?;
    let x = read_measure(&a.measure)?;
    let obs = add_noise(&forward(&w, &x), a.delta, cli.seed.unwrap_or(0)).context("noise")?;
    let dir = out_dir(cli);
    ensure_dir(&dir)?;
    write_observation(&dir.join("y.csv"), &obs)
}

fn recover_cmd(cli: &Cli, a: &RecoverArgs) -> Result<()> {
    let w = read_window(&a.window)?;
    let obs = read_observation(&a.obs)?;
    let grid = Grid::new(a.grid_n).context("grid")?;
    let deltap = a.deltap.unwrap_or(obs.delta.max(1e-8));
    let opts = RecoverOptions {
        method: match a.method {
            MethodArg::ActiveSet => NnlsMethod::ActiveSet,
            MethodArg::ProjectedGradient => NnlsMethod::ProjectedGradient,
        },
        ..RecoverOptions::default()
    };
    let r = recover(&w, &obs, &grid, deltap, &opts).context("recovery")?;
    let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("xhat.json"));
    write_measure(&path, &r.extracted)?;
    print!(
        "{}",
        to_json_string(&RecoverOut {
            residual: r.residual,
            deltap,
            converged: r.converged,
            iterations: r.iterations,
            atoms: r.extracted.len(),
        })
    );
    if !r.converged {
        return Err(AppError::NotConverged {
            residual: r.residual,
            deltap,
        });
    }
    Ok(())
}

fn distance_cmd(cli: &Cli, a: &DistanceArgs) -> Result<()> {
    let x1 = read_measure(&a.a)?;
    let x2 = read_measure(&a.b)?;
    let (d, plan) = gen_wasserstein(&x1, &x2, a.norm.into());
    let out = DistanceOut {
        d_gw: d,
        transported_mass: plan.transported_mass(),
        destroyed: plan.destroyed_mass(),
        created: plan.created_mass(),
    };
    emit(cli, &out, None)
}

fn certificate_cmd(cli: &Cli, a: &CertificateArgs) -> Result<()> {
    let w = read_window(&a.window)?;
    let support = read_measure(&a.support)?;
    let opts = CertOptions::default();
    let need_eps = || {
        a.epsilon
            .ok_or_else(|| AppError::Config("--epsilon is required for this kind".into()))
    };
    let cert = match a.kind {
        CertKind::Noiseless => build_q_noiseless(&w, &support, &opts),
        CertKind::Noisy => build_q_noisy(&w, &support, need_eps()?, &opts),
        CertKind::Q0 => {
            let eps = need_eps()?;
            let pattern = if a.pattern.is_empty() {
                vec![1; support.len()]
            } else {
                a.pattern.clone()
            };
            let q = build_q_noisy(&w, &support, eps, &opts).context("noisy certificate")?;
            build_q0(&w, &support, eps, &pattern, Some(&q), &opts)
        }
    }
    .context("certificate")?;
    let dir = out_dir(cli);
    ensure_dir(&dir)?;
    write_matrix_csv(&dir.join("b.csv"), &cert.b)?;
    write_matrix_csv(&dir.join("heatmap.csv"), &cert.grid_values(a.heatmap_n))?;
    let report = CertificateReport::from(&cert);
    write_json(&dir.join("report.json"), &report)?;
    print!("{}", to_json_string(&report));
    match report.failure {
        None if report.passed => Ok(()),
        f => Err(AppError::Certificate(
            f.map_or_else(|| "verification failed".into(), |f| f.what),
        )),
    }
}

fn tcheck_cmd(cli: &Cli, a: &TcheckArgs) -> Result<()> {
    let w = read_window(&a.window)?;
    let passed = match a.mode {
        TcheckMode::Tsystem => {
            let r = check_tsystem(&w, a.trials, cli.seed.unwrap_or(0)).context("tsystem")?;
            let out = TsystemOut {
                mode: "tsystem",
                passed: r.passed,
                trials: r.trials,
                positive: r.positive,
                negative: r.negative,
                singular: r.singular,
                below_threshold: r.below_threshold,
                min_log10_det: r.min_log10_det,
                worst_sequence: r.worst_sequence.clone(),
            };
            emit(cli, &out, None)?;
            r.passed
        }
        TcheckMode::Tstar => {
            let path = a
                .pattern
                .as_ref()
                .ok_or_else(|| AppError::Config("--pattern is required for tstar".into()))?;
            let p: TstarPattern = read_json(path)?;
            let m = p.limits.iter().map(|l| l.1).sum::<usize>() + 1;
            let seq = make_admissible(&p.limits, p.singleton, m, p.h0).context("admissible sequence")?;
            let f = if p.zeros.is_empty() {
                Target::Constant(1.0)
            } else {
                Target::Zeros {
                    centers: p.zeros.clone(),
                    radius: p.radius,
                }
            };
            let endpoint = match p.endpoint {
                Some(e) => e,
                None => {
                    let support: Vec<f64> = p.limits.iter().filter(|l| l.1 == 2).map(|l| l.0).collect();
                    let (_, eta) =
                        univariate_dominating(&w, &support, &f, &ETA_LADDER, 2048).context("endpoint ladder")?;
                    f.sup() + eta
                }
            };
            let r = check_tstar(&f, endpoint, &w, &seq, &p.n, p.tol).context("tstar")?;
            let out = TstarOut {
                mode: "tstar",
                passed: r.passed,
                part1: r.part1,
                part2: r.part2,
                part2_applicable: r.part2_applicable,
                endpoint,
                final_det: r.final_det,
                slopes: r.slopes.clone(),
                slope_spread: r.slope_spread,
                tol: p.tol,
                steps: r
                    .steps
                    .iter()
                    .map(|s| TstarStepOut {
                        n: s.n,
                        det_sign: s.det_sign,
                        log10_det: s.log10_det,
                        log_minors: s.log_minors.clone(),
                    })
                    .collect(),
            };
            emit(cli, &out, None)?;
            r.passed
        }
    };
    if passed {
        Ok(())
    } else {
        Err(AppError::Certificate("window check failed".into()))
    }
}

fn pipeline_cmd(cli: &Cli) -> Result<()> {
    let sc = load_scenario(cli)?;
    let dir = cli.out.clone().or_else(|| sc.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let out = run_pipeline(&sc)?;
    out.write(&dir)?;
    print!("{}", to_json_string(&out.report));
    out.status()
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<()> {
    let sc = load_scenario(cli)?;
    let dir = cli.out.clone().or_else(|| sc.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let jobs = cli
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let out = run_sweep(&sc, a.axis, &a.values, a.replicates, jobs)?;
    ensure_dir(&dir)?;
    let path = dir.join("sweep.csv");
    write_sweep_csv(&path, &out.rows)?;
    for (v, runs) in a.values.iter().zip(&out.runs) {
        for (i, r) in runs.iter().enumerate() {
            if let Err(e) = r {
                eprintln!("value {v}, replicate {i}: {e}");
            }
        }
    }
    println!("{}", path.display());
    Ok(())
}
