use possr::formats::{read_measure, MeasureFile, WindowSpec};
use possr::pipeline::{run_pipeline, run_sweep, sweep_scenario, BoundKind, SweepAxis};
use possr::scenario::{DeltapSpec, GeneratorSpec, Scenario, Truth};
use possr::AppError;
use possr_core::{gen_wasserstein, AtomicMeasure, GroundNorm};

fn generated(k: usize, seed: u64) -> Truth {
    Truth::Generate {
        generate: GeneratorSpec {
            k,
            sep_floor: 0.1,
            weight_range: [0.5, 2.0],
            seed,
        },
    }
}

fn noiseless(k: usize, m: usize, seed: u64) -> Scenario {
    let mut sc = Scenario::new(WindowSpec::gaussian_uniform(0.2, m), generated(k, seed));
    sc.grid_n = 128;
    sc.deltap = DeltapSpec::Explicit { value: 1e-8 };
    sc
}

fn noisy(k: usize, delta: f64, seed: u64) -> Scenario {
    let mut sc = Scenario::new(WindowSpec::gaussian_uniform(0.2, 2 * k + 2), generated(k, seed));
    sc.grid_n = 128;
    sc.delta = delta;
    sc.noise_seed = seed;
    sc.epsilon = Some(0.05);
    sc.certificates = true;
    sc
}

#[test]
fn noiseless_two_atoms_meet_grid_bound() {
    let out = run_pipeline(&noiseless(2, 5, 11)).unwrap();
    let r = &out.report;
    assert_eq!(r.bound_kind, BoundKind::Grid);
    assert!(r.d_gw <= 2.0 * r.h * r.tv + 1e-4);
    assert_eq!(r.bound_satisfied, Some(true));
    assert_eq!(r.r, 0.0);
    assert!(r.c1.is_none());
}

#[test]
fn empty_truth_gives_zero_distance() {
    let sc = Scenario::new(WindowSpec::gaussian_uniform(0.2, 3), Truth::Atoms(MeasureFile::default()));
    let out = run_pipeline(&sc).unwrap();
    assert_eq!(out.report.d_gw, 0.0);
    assert_eq!(out.report.recovered_atoms, 0);
    assert!(out.report.sep.is_none());
}

#[test]
fn noisy_run_reports_constants_and_bounds() {
    let out = run_pipeline(&noisy(1, 0.02, 3)).unwrap();
    let r = &out.report;
    assert!(r.converged);
    assert!(r.deltap_precondition);
    assert_eq!(r.deltap, 0.02);
    let c = r.certificates.as_ref().unwrap();
    assert!(c.passed, "{c:?}");
    let (c1, c2, c3) = (r.c1.unwrap(), r.c2.unwrap(), r.c3.unwrap());
    assert_eq!(c2, r.tv / 2.0);
    assert!((c3 - (r.lipschitz * c1 + 1.0)).abs() <= 1e-9 * c3);
    assert_eq!(r.theorem_rhs, Some(c1 * 0.02 + c2 * 0.05 + c3 * r.r));
    assert_eq!(r.bound_kind, BoundKind::Theorem);
    assert_eq!(r.bound_satisfied, Some(true));
    let b = r.error_bounds.unwrap();
    assert!(b.passed && b.off_slack >= 0.0 && b.near_slack >= 0.0);
    out.status().unwrap();
}

#[test]
fn model_mismatch_enters_deltap() {
    let x = AtomicMeasure::from_triples(&[(0.3, 0.3, 1.0), (0.31, 0.7, 0.2), (0.7, 0.5, 1.0)]).unwrap();
    let mut sc = Scenario::new(WindowSpec::gaussian_uniform(0.2, 6), Truth::Atoms(MeasureFile::from(&x)));
    sc.grid_n = 64;
    sc.delta = 0.01;
    sc.epsilon = Some(0.1);
    sc.k = Some(2);
    let out = run_pipeline(&sc).unwrap();
    let r = &out.report;
    assert!(r.r > 0.0);
    assert!((r.deltap - (0.01 + r.lipschitz * r.r)).abs() <= 1e-12);
    assert!(r.deltap_precondition);
    assert_eq!(out.model.len(), 2);

    sc.deltap = DeltapSpec::Multiplicative;
    let m = run_pipeline(&sc).unwrap();
    assert!((m.report.deltap - 0.01 * (1.0 + r.lipschitz * r.r)).abs() <= 1e-12);
    assert!(!m.report.deltap_precondition);
}

#[test]
fn certificates_need_epsilon() {
    let mut sc = noiseless(1, 4, 0);
    sc.certificates = true;
    let e = run_pipeline(&sc).unwrap_err();
    assert!(matches!(e, AppError::Config(_)));
    assert_eq!(e.exit_code(), 2);
}

#[test]
fn unreachable_radius_is_not_converged() {
    let x = AtomicMeasure::from_triples(&[(0.33, 0.41, 1.0)]).unwrap();
    let mut sc = Scenario::new(WindowSpec::gaussian_uniform(0.2, 3), Truth::Atoms(MeasureFile::from(&x)));
    sc.grid_n = 5;
    sc.deltap = DeltapSpec::Explicit { value: 1e-12 };
    sc.deltap_floor = 0.0;
    let out = run_pipeline(&sc).unwrap();
    assert!(!out.report.converged);
    assert_eq!(out.status().unwrap_err().exit_code(), 3);
}

#[test]
fn written_files_reproduce_distance_and_bytes() {
    let sc = noisy(2, 0.05, 4);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_pipeline(&sc).unwrap();
    out.write(a.path()).unwrap();
    run_pipeline(&sc).unwrap().write(b.path()).unwrap();
    for f in ["report.json", "xhat.json", "x.json", "y.csv", "y.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let x = read_measure(&a.path().join("x.json")).unwrap();
    let xhat = read_measure(&a.path().join("xhat.json")).unwrap();
    let d = gen_wasserstein(&x, &xhat, GroundNorm::L2).0;
    assert!((d - out.report.d_gw).abs() <= 1e-9);
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(a.path().join("report.json")).unwrap()).unwrap();
    for key in ["d_gw", "residual", "delta", "deltap", "sep", "R", "c1", "c2", "c3", "theorem_rhs", "bound_satisfied"] {
        assert!(report.get(key).is_some(), "{key}");
    }
}

#[test]
fn single_value_sweep_matches_pipeline() {
    let sc = noisy(1, 0.03, 8);
    let sweep = run_sweep(&sc, SweepAxis::Delta, &[0.03], 1, 2).unwrap();
    let direct = run_pipeline(&sc).unwrap().report;
    assert_eq!(sweep.runs[0][0].as_ref().unwrap(), &direct);
    let row = &sweep.rows[0];
    assert_eq!(row.d_gw_mean, Some(direct.d_gw));
    assert_eq!(row.d_gw_max, Some(direct.d_gw));
    assert_eq!(row.theorem_rhs, direct.theorem_rhs);
    assert_eq!((row.runs, row.failures), (1, 0));
}

#[test]
fn sweep_is_independent_of_job_count() {
    let sc = noisy(1, 0.0, 2);
    let one = run_sweep(&sc, SweepAxis::Delta, &[0.0, 0.05], 3, 1).unwrap();
    let four = run_sweep(&sc, SweepAxis::Delta, &[0.0, 0.05], 3, 4).unwrap();
    assert_eq!(one.rows, four.rows);
}

#[test]
fn m_sweep_recovers_from_threshold_on() {
    let k = 2;
    let base = noiseless(k, 2 * k + 1, 21);
    let values = [(2 * k) as f64, (2 * k + 1) as f64, (2 * k + 3) as f64];
    let out = run_sweep(&base, SweepAxis::M, &values, 3, 4).unwrap();
    for row in &out.rows[1..] {
        for run in &out.runs[values.iter().position(|v| *v == row.value).unwrap()] {
            let r = run.as_ref().unwrap();
            assert!(r.d_gw <= 2.0 * r.h * r.tv + 1e-4, "M={}: {}", r.m, r.d_gw);
        }
    }
}

#[test]
fn failed_rows_are_recorded() {
    let sc = noisy(1, 0.01, 1);
    let out = run_sweep(&sc, SweepAxis::Epsilon, &[0.05, 0.7], 2, 2).unwrap();
    assert_eq!(out.rows[0].failures, 0);
    assert_eq!(out.rows[1].failures, 2);
    assert_eq!(out.rows[1].d_gw_mean, None);
    assert!(run_sweep(&sc, SweepAxis::Delta, &[], 1, 1).is_err());
    assert!(sweep_scenario(&sc, SweepAxis::M, 2.5, 0).is_err());
    let fixed = Scenario::new(WindowSpec::gaussian_uniform(0.2, 3), Truth::Atoms(MeasureFile::default()));
    assert!(sweep_scenario(&fixed, SweepAxis::Sep, 0.1, 0).is_err());
}

#[test]
fn replicates_shift_seeds() {
    let sc = noisy(2, 0.01, 30);
    let a = sweep_scenario(&sc, SweepAxis::Delta, 0.02, 0).unwrap();
    let b = sweep_scenario(&sc, SweepAxis::Delta, 0.02, 1).unwrap();
    assert_eq!(a.delta, 0.02);
    assert_eq!(b.noise_seed, a.noise_seed + 1);
    assert_ne!(a.truth.measure().unwrap(), b.truth.measure().unwrap());
}
