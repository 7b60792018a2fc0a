use approx::assert_relative_eq;
use possr_core::transport::*;
use possr_core::{AtomicMeasure, Error};
use proptest::prelude::*;

fn m(t: &[(f64, f64, f64)]) -> AtomicMeasure {
    AtomicMeasure::from_triples(t).unwrap()
}

fn plan_is_feasible(x1: &AtomicMeasure, x2: &AtomicMeasure, p: &TransportPlan, norm: GroundNorm) -> bool {
    let nonneg = p
        .coupling
        .iter()
        .chain(&p.destroyed)
        .chain(&p.created)
        .all(|v| *v >= -1e-12);
    let mut obj = p.destroyed_mass() + p.created_mass();
    for (i, a) in x1.atoms().iter().enumerate() {
        for (j, b) in x2.atoms().iter().enumerate() {
            obj += p.gamma(i, j) * norm.dist(&a.loc, &b.loc).min(COST_CAP);
        }
    }
    nonneg && p.marginal_error(x1, x2) <= 1e-9 && (obj - p.objective).abs() <= 1e-9
}

#[test]
fn wasserstein_examples() {
    let x = m(&[(0.2, 0.3, 1.0), (0.6, 0.7, 2.0)]);
    let (d, p) = wasserstein(&x, &x, GroundNorm::L2).unwrap();
    assert!(d.abs() <= 1e-12);
    assert_relative_eq!(p.gamma(0, 0), 1.0);
    assert_relative_eq!(p.gamma(1, 1), 2.0);

    let (d, _) = wasserstein(&m(&[(0.2, 0.5, 1.0)]), &m(&[(0.5, 0.5, 1.0)]), GroundNorm::L2).unwrap();
    assert_relative_eq!(d, 0.3, epsilon = 1e-12);

    let a = m(&[(0.0, 0.0, 1.0), (1.0, 1.0, 1.0)]);
    let b = m(&[(1.0, 0.0, 1.0), (0.0, 1.0, 1.0)]);
    let (d, p) = wasserstein(&a, &b, GroundNorm::L2).unwrap();
    assert_relative_eq!(d, 2.0, epsilon = 1e-12);
    assert_eq!(p.destroyed_mass(), 0.0);
    assert_eq!(p.created_mass(), 0.0);
}

#[test]
fn wasserstein_unequal_mass() {
    let r = wasserstein(&m(&[(0.2, 0.5, 1.0)]), &m(&[(0.5, 0.5, 2.0)]), GroundNorm::L2);
    assert!(matches!(r, Err(Error::UnequalMass { .. })));
}

#[test]
fn generalized_examples() {
    let x = m(&[(0.2, 0.3, 1.0), (0.6, 0.7, 2.0)]);
    assert!(gen_wasserstein(&x, &x, GroundNorm::L2).0.abs() <= 1e-12);

    let (d, p) = gen_wasserstein(&m(&[(0.4, 0.4, 0.7)]), &AtomicMeasure::empty(), GroundNorm::L2);
    assert_relative_eq!(d, 0.7, epsilon = 1e-12);
    assert_relative_eq!(p.destroyed_mass(), 0.7, epsilon = 1e-12);

    let a = m(&[(0.5, 0.5, 1.0), (0.51, 0.5, 1.0)]);
    let b = m(&[(0.405, 0.5, 1.0), (0.605, 0.5, 1.0)]);
    let (d, p) = gen_wasserstein(&a, &b, GroundNorm::L2);
    assert_relative_eq!(d, 0.19, epsilon = 1e-12);
    assert_relative_eq!(p.transported_mass(), 2.0, epsilon = 1e-12);
}

#[test]
fn bruteforce_examples() {
    let e = AtomicMeasure::empty();
    assert_eq!(gw_bruteforce(&e, &e, GroundNorm::L2).unwrap(), 0.0);
    for (dist, a) in [(0.3, 1.0), (0.9, 2.0)] {
        let x1 = m(&[(0.05, 0.5, a)]);
        let x2 = m(&[(0.05 + dist, 0.5, a)]);
        assert_relative_eq!(gw_bruteforce(&x1, &x2, GroundNorm::L2).unwrap(), (dist * a).min(2.0 * a), epsilon = 1e-12);
    }
    let five: Vec<(f64, f64, f64)> = (0..5).map(|i| (0.1 + 0.1 * i as f64, 0.5, 1.0)).collect();
    assert!(matches!(
        gw_bruteforce(&m(&five), &e, GroundNorm::L2),
        Err(Error::TooManyAtoms { .. })
    ));
}

#[test]
fn cap_applies_to_far_pairs() {
    let x1 = m(&[(0.0, 0.0, 1.0)]);
    let x2 = m(&[(1.0, 1.0, 1.0)]);
    let (d, _) = gen_wasserstein(&x1, &x2, GroundNorm::L1);
    assert_relative_eq!(d, 2.0, epsilon = 1e-12);
    let (d, _) = gen_wasserstein(&x1, &x2, GroundNorm::Linf);
    assert_relative_eq!(d, 1.0, epsilon = 1e-12);
}

#[test]
fn larger_instances_match_dense_lp() {
    let mut pts = Vec::new();
    for i in 0..12 {
        let f = i as f64;
        pts.push((0.05 + 0.07 * f, (0.37 * f).fract(), 0.3 + 0.1 * (f % 4.0)));
    }
    let x1 = m(&pts[..7]);
    let x2 = m(&pts[7..]);
    let (d, p) = gen_wasserstein(&x1, &x2, GroundNorm::L2);
    let dense = gen_wasserstein_dense(&x1, &x2, GroundNorm::L2).unwrap();
    assert_relative_eq!(d, dense, epsilon = 1e-9);
    assert!(plan_is_feasible(&x1, &x2, &p, GroundNorm::L2));
}

fn arb(max: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.05f64..2.0), 0..=max)
        .prop_map(|v| AtomicMeasure::from_triples(&v).unwrap())
}

fn norm() -> impl Strategy<Value = GroundNorm> {
    prop_oneof![Just(GroundNorm::L2), Just(GroundNorm::Linf), Just(GroundNorm::L1)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn symmetric(a in arb(5), b in arb(5), n in norm()) {
        let d1 = gen_wasserstein(&a, &b, n).0;
        let d2 = gen_wasserstein(&b, &a, n).0;
        prop_assert!((d1 - d2).abs() <= 1e-9);
    }

    #[test]
    fn identity(a in arb(6), n in norm()) {
        prop_assert!(gen_wasserstein(&a, &a, n).0.abs() <= 1e-12);
    }

    #[test]
    fn triangle(a in arb(5), b in arb(5), c in arb(5), n in norm()) {
        let ab = gen_wasserstein(&a, &b, n).0;
        let bc = gen_wasserstein(&b, &c, n).0;
        let ac = gen_wasserstein(&a, &c, n).0;
        prop_assert!(ac <= ab + bc + 1e-8);
    }

    #[test]
    fn upper_bounds(a in arb(5), b in arb(5), n in norm()) {
        let (d, p) = gen_wasserstein(&a, &b, n);
        prop_assert!(d <= a.tv_norm() + b.tv_norm() + 1e-12);
        prop_assert!(plan_is_feasible(&a, &b, &p, n));
    }

    #[test]
    fn bounded_by_wasserstein(v in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.05f64..2.0), 1..5), perm in any::<u64>(), n in norm()) {
        let a = AtomicMeasure::from_triples(&v).unwrap();
        let mut w: Vec<(f64, f64, f64)> = v.iter().map(|&(t, s, wt)| ((t + 0.37) % 1.0, (s * 0.7 + (perm % 7) as f64 * 0.03) % 1.0, wt)).collect();
        let k = (perm as usize) % w.len();
        w.rotate_left(k);
        let b = AtomicMeasure::from_triples(&w).unwrap();
        prop_assume!((a.tv_norm() - b.tv_norm()).abs() <= 1e-9);
        let (dw, pw) = wasserstein(&a, &b, n).unwrap();
        prop_assert!(pw.marginal_error(&a, &b) <= 1e-9);
        prop_assert!(gen_wasserstein(&a, &b, n).0 <= dw + 1e-9);
    }

    #[test]
    fn matches_bruteforce(a in arb(3), b in arb(3), n in norm()) {
        let d = gen_wasserstein(&a, &b, n).0;
        let o = gw_bruteforce(&a, &b, n).unwrap();
        prop_assert!((d - o).abs() <= 1e-3, "{} vs {}", d, o);
    }

    #[test]
    fn matches_dense(a in arb(8), b in arb(8), n in norm()) {
        let d = gen_wasserstein(&a, &b, n).0;
        let o = gen_wasserstein_dense(&a, &b, n).unwrap();
        prop_assert!((d - o).abs() <= 1e-9, "{} vs {}", d, o);
    }
}
