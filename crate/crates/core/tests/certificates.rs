use approx::assert_relative_eq;
use possr_core::certificates::*;
use possr_core::{AtomicMeasure, Basis, Point, Window};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn opts() -> CertOptions {
    CertOptions::default()
}

fn gauss(m: usize) -> Window {
    Window::gaussian_uniform(0.2, m).unwrap()
}

fn measure(pts: &[(f64, f64)]) -> AtomicMeasure {
    let t: Vec<(f64, f64, f64)> = pts.iter().map(|&(t, s)| (t, s, 1.0)).collect();
    AtomicMeasure::from_triples(&t).unwrap()
}

fn coefficient_identity(c: &Certificate) {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (t, s) = (rng.random::<f64>(), rng.random::<f64>());
        let a = c.eval(t, s);
        let b = c.eval_terms(t, s);
        assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
    }
}

#[test]
fn vanishing_without_zeros_is_positive() {
    let w = gauss(3);
    let q = univariate_vanishing(&w, &[], 0.3, 2048).unwrap();
    assert_relative_eq!(q.eval(&w, 0.3), 1.0, epsilon = 1e-12);
}

#[test]
fn vanishing_single_zero_gaussian() {
    let w = Window::gaussian(0.2, vec![0.0, 0.5, 1.0]).unwrap();
    let q = univariate_vanishing(&w, &[0.5], 0.0, 2048).unwrap();
    assert!(q.eval(&w, 0.5).abs() <= 1e-10);
    let grid: Vec<f64> = (0..2048).map(|i| i as f64 / 2047.0).collect();
    let (mut at, mut min) = (0.0, f64::INFINITY);
    for t in grid {
        let v = q.eval(&w, t);
        if v < min {
            min = v;
            at = t;
        }
    }
    assert!((at - 0.5).abs() <= 1e-3);
}

#[test]
fn vanishing_monomials_are_squared_products() {
    let w = Window::monomial(3).unwrap();
    let q = univariate_vanishing(&w, &[0.5], 0.0, 2048).unwrap();
    let scale = q.eval(&w, 0.0) / 0.25;
    for i in 0..100 {
        let t = i as f64 / 99.0;
        let expect = scale * (t - 0.5) * (t - 0.5);
        assert!((q.eval(&w, t) - expect).abs() <= 1e-8 * (1.0 + expect.abs()));
    }

    let w = Window::monomial(5).unwrap();
    let zeros = [0.3, 0.7];
    let q = univariate_vanishing(&w, &zeros, 0.0, 2048).unwrap();
    let prod = |t: f64| zeros.iter().map(|z| (t - z) * (t - z)).product::<f64>();
    let scale = q.eval(&w, 0.0) / prod(0.0);
    assert!(scale > 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let t = rng.random::<f64>();
        let expect = scale * prod(t);
        let got = q.eval(&w, t);
        assert!((got - expect).abs() <= 1e-8 * expect.abs().max(1e-6), "{t}: {got} vs {expect}");
    }
}

#[test]
fn vanishing_rejects_small_window() {
    let w = gauss(4);
    assert!(univariate_vanishing(&w, &[0.3, 0.7], 0.0, 2048).is_err());
}

#[test]
fn dominating_all_zeros() {
    let w = gauss(6);
    let t = [0.3, 0.7];
    let f = Target::Zeros {
        centers: t.to_vec(),
        radius: 0.1,
    };
    let (q, _) = univariate_dominating(&w, &t, &f, &ETA_LADDER, 2048).unwrap();
    for &tk in &t {
        assert!(q.eval(&w, tk).abs() <= 1e-9);
        assert!(q.deriv(&w, tk).abs() <= 1e-7);
    }
    for i in 1..2047 {
        let x = i as f64 / 2047.0;
        let v = q.eval(&w, x);
        assert!(v >= -1e-9);
        if t.iter().all(|c| (x - c).abs() > 0.1) {
            assert!(v >= 1.0 - 1e-9);
        }
    }
}

#[test]
fn dominating_negative_plateau() {
    let w = gauss(6);
    let t = [0.3, 0.7];
    let f = Target::Plateau {
        center: 0.3,
        radius: 0.1,
        level: -1.0,
    };
    let (q, _) = univariate_dominating(&w, &t, &f, &ETA_LADDER, 2048).unwrap();
    assert_relative_eq!(q.eval(&w, 0.3), -1.0, epsilon = 1e-9);
    assert!(q.eval(&w, 0.7).abs() <= 1e-9);
    for i in 1..2047 {
        let x = i as f64 / 2047.0;
        assert!(q.eval(&w, x) >= f.eval(x) - 1e-9);
    }
}

#[test]
fn dominating_without_interior_constraints_is_constant_like() {
    let w = gauss(4);
    let f = Target::Constant(0.0);
    let (q, eta) = univariate_dominating(&w, &[], &f, &ETA_LADDER, 2048).unwrap();
    assert_eq!(eta, ETA_LADDER[0]);
    assert_relative_eq!(q.eval(&w, 0.0), eta, epsilon = 1e-10);
    assert_relative_eq!(q.eval(&w, 1.0), eta, epsilon = 1e-10);
    for i in 0..100 {
        assert!(q.eval(&w, i as f64 / 99.0) >= -1e-9);
    }
}

#[test]
fn noiseless_single_atom() {
    let w = gauss(3);
    let c = assemble_q_noiseless(&w, &measure(&[(0.4, 0.6)]), &opts()).unwrap();
    assert_eq!(c.terms.len(), 2);
    assert!(c.eval(0.4, 0.6).abs() <= 1e-8);
    coefficient_identity(&c);
}

#[test]
fn noiseless_two_atoms_cross_points() {
    let w = gauss(5);
    let c = assemble_q_noiseless(&w, &measure(&[(0.3, 0.35), (0.7, 0.75)]), &opts()).unwrap();
    assert_eq!(c.terms.len(), 4);
    assert!(c.eval(0.3, 0.75) > 0.0);
    assert!(c.eval(0.7, 0.35) > 0.0);
    assert!(c.report.min_cross.unwrap() > 0.0);
    assert!(c.report.min_off.unwrap() > 0.0);
    coefficient_identity(&c);
}

#[test]
fn noiseless_three_atoms() {
    let w = gauss(7);
    let c = assemble_q_noiseless(&w, &measure(&[(0.2, 0.5), (0.5, 0.8), (0.8, 0.2)]), &opts()).unwrap();
    assert_eq!(c.terms.len(), 8);
    for p in &c.support {
        assert!(c.eval(p.t, p.s).abs() <= 1e-8);
    }
}

#[test]
fn noisy_gbar() {
    let w = gauss(6);
    let c = build_q_noisy(&w, &measure(&[(0.3, 0.3), (0.7, 0.7)]), 0.1, &opts()).unwrap();
    assert_eq!(c.gbar, 1.0);
}

#[test]
fn noisy_single_atom_sigma_02() {
    let w = gauss(4);
    let c = assemble_q_noisy(&w, &measure(&[(0.5, 0.5)]), 0.1, &opts()).unwrap();
    assert_eq!(c.gbar, 0.5);
    assert!(c.report.min_far.unwrap() >= 2.0 * (1.0 - 1e-6));
    assert!(c.report.min_off.unwrap() >= 0.5 * (1.0 - 1e-6));
    assert!(c.report.min_near.unwrap() >= -1e-8);
    coefficient_identity(&c);
}

#[test]
fn noisy_two_atoms() {
    let w = gauss(6);
    let c = assemble_q_noisy(&w, &measure(&[(0.3, 0.7), (0.7, 0.3)]), 0.1, &opts()).unwrap();
    assert!(c.report.min_far.unwrap() >= 4.0 * (1.0 - 1e-6));
    assert!(c.report.max_error_on_support <= 1e-8);
    coefficient_identity(&c);
}

#[test]
fn noisy_rejects_small_window() {
    let w = gauss(5);
    assert!(build_q_noisy(&w, &measure(&[(0.3, 0.7), (0.7, 0.3)]), 0.1, &opts()).is_err());
}

#[test]
fn certificates_cap_at_twelve_atoms() {
    let w = gauss(40);
    let pts: Vec<(f64, f64)> = (0..13).map(|i| (0.05 + 0.07 * i as f64, 0.05 + 0.07 * i as f64)).collect();
    assert!(matches!(
        build_q_noiseless(&w, &measure(&pts), &opts()),
        Err(possr_core::Error::TooManyAtoms { .. })
    ));
}

#[test]
fn q0_all_plus() {
    let w = gauss(6);
    let x = measure(&[(0.3, 0.7), (0.7, 0.3)]);
    let c = assemble_q0(&w, &x, 0.1, &[1, 1], None, &opts()).unwrap();
    for p in &c.support {
        assert!((c.eval(p.t, p.s) - 1.0).abs() <= 1e-8);
    }
    assert!(c.report.min_slack.unwrap() >= -1e-8);
    if let CertificateKind::Q0 { lift, .. } = c.kind {
        if lift == 0.0 {
            for a in &c.support {
                for b in &c.support {
                    let p = Point::new(a.t, b.s);
                    let g = g0_target(&c.support, &[1, 1], 0.1, &p);
                    assert!((c.eval(p.t, p.s) - g).abs() <= 1e-8);
                }
            }
        }
    }
    coefficient_identity(&c);
}

#[test]
fn q0_single_negative() {
    let w = gauss(4);
    let x = measure(&[(0.5, 0.5)]);
    let c = assemble_q0(&w, &x, 0.1, &[-1], None, &opts()).unwrap();
    assert!((c.eval(0.5, 0.5) + 1.0).abs() <= 1e-8);
    let vals = c.grid_values(128);
    for i in 0..128 {
        for j in 0..128 {
            let (t, s) = (i as f64 / 127.0, j as f64 / 127.0);
            if (t - 0.5).abs() > 0.1 || (s - 0.5).abs() > 0.1 {
                assert!(vals[(i, j)] >= -1e-8);
            }
        }
    }
    coefficient_identity(&c);
}

#[test]
fn q0_mixed_pattern() {
    let w = gauss(6);
    let x = measure(&[(0.3, 0.7), (0.7, 0.3)]);
    let c = assemble_q0(&w, &x, 0.1, &[1, -1], None, &opts()).unwrap();
    assert!((c.eval(0.3, 0.7) - 1.0).abs() <= 1e-8);
    assert!((c.eval(0.7, 0.3) + 1.0).abs() <= 1e-8);
}

#[test]
fn constants() {
    let w = gauss(4);
    let x = measure(&[(0.5, 0.5)]);
    let q = assemble_q_noisy(&w, &x, 0.1, &opts()).unwrap();
    let q0 = assemble_q0(&w, &x, 0.1, &[1], Some(&q), &opts()).unwrap();
    let c = error_constants(&q, &q0, 0.0, 2.0);
    assert_eq!(c.c2, 1.0);
    assert_eq!(c.c3, 1.0);
    assert_relative_eq!(c.c1, 10.0 * q.b_norm() + 6.0 * q0.b_norm(), epsilon = 1e-12);
    assert_relative_eq!(c.c1_lemma, (6.0 + 2.0 / 0.5) * q.b_norm() + 6.0 * q0.b_norm(), epsilon = 1e-12);
    let c = error_constants(&q, &q0, 3.0, 2.0);
    assert_relative_eq!(c.c3, 3.0 * c.c1 + 1.0, epsilon = 1e-12);
}

#[test]
fn lemma_coefficient_at_three_atoms() {
    let w = gauss(8);
    let x = measure(&[(0.2, 0.5), (0.5, 0.8), (0.8, 0.2)]);
    let q = build_q_noisy(&w, &x, 0.1, &opts()).unwrap();
    assert_eq!(q.gbar, 2.0);
    let q0 = build_q0(&w, &x, 0.1, &[1, 1, 1], Some(&q), &opts()).unwrap();
    let c = error_constants(&q, &q0, 1.0, 3.0);
    assert_relative_eq!(c.c1_lemma, 7.0 * q.b_norm() + 6.0 * q0.b_norm(), epsilon = 1e-12);
    assert!(c.c1_lemma < c.c1);
}

#[test]
fn bounds_check_zero_difference() {
    let w = gauss(4);
    let x = measure(&[(0.5, 0.5)]);
    let q = assemble_q_noisy(&w, &x, 0.1, &opts()).unwrap();
    let q0 = assemble_q0(&w, &x, 0.1, &[1], Some(&q), &opts()).unwrap();
    let r = error_bounds_check(&x, &x, 0.1, &q, &q0, 0.0);
    assert!(r.passed);
    assert_eq!(r.off_lhs, 0.0);
    assert_eq!(r.near_lhs, 0.0);
}

#[test]
fn neighborhood_masses_split_by_box() {
    let xk = measure(&[(0.5, 0.5)]);
    let xhat = AtomicMeasure::from_triples(&[(0.52, 0.5, 0.7), (0.9, 0.9, 0.1)]).unwrap();
    let (inside, outside) = neighborhood_integrals(&xhat, &xk, 0.1);
    assert_relative_eq!(inside[0], -0.3, epsilon = 1e-12);
    assert_relative_eq!(outside, 0.1, epsilon = 1e-12);
    assert_eq!(pattern_of(&inside), vec![-1]);
    assert_eq!(pattern_of(&[0.0, 1.0]), vec![-1, 1]);
}

#[test]
fn scaled_basis_is_accepted() {
    struct Scaled(Window, f64);
    impl Basis for Scaled {
        fn len(&self) -> usize {
            self.0.len()
        }
        fn eval_into(&self, t: f64, out: &mut [f64]) {
            self.0.eval_into(t, out);
            out[0] *= self.1;
        }
        fn deriv_into(&self, t: f64, out: &mut [f64]) {
            self.0.deriv_into(t, out);
            out[0] *= self.1;
        }
    }
    let w = Scaled(gauss(3), 5.0);
    let q = univariate_vanishing(&w, &[0.4], 0.9, 512).unwrap();
    assert!(q.eval(&w, 0.4).abs() < 1e-10);
}
