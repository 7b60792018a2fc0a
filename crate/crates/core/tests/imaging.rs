use approx::assert_relative_eq;
use nalgebra::DMatrix;
use possr_core::imaging::*;
use possr_core::{AtomicMeasure, Point};
use proptest::prelude::*;

#[test]
fn phi_examples() {
    let w = Window::gaussian(0.2, vec![0.1, 0.4, 0.9]).unwrap();
    assert_eq!(w.phi_eval(1, 0.4).unwrap(), 1.0);
    assert_relative_eq!(w.phi_eval(0, 0.3).unwrap(), (-1.0f64).exp(), epsilon = 1e-15);
    assert_relative_eq!(w.phi_eval(0, 0.3).unwrap(), 0.36788, epsilon = 1e-5);
    assert!(w.phi_eval(3, 0.5).is_err());
    let mono = Window::monomial(3).unwrap();
    assert_eq!(mono.phi_eval(2, 0.5).unwrap(), 0.25);
}

#[test]
fn gaussian_derivative_is_analytic() {
    let w = Window::gaussian(0.2, vec![0.0, 0.5, 1.0]).unwrap();
    assert!(w.has_analytic_derivative());
    let t: f64 = 0.37;
    let u = (t - 0.5) / 0.2;
    assert_relative_eq!(w.phi_deriv(1, t).unwrap(), -2.0 * u / 0.2 * (-u * u).exp(), epsilon = 1e-14);
}

#[test]
fn window_validation() {
    assert!(Window::gaussian(0.0, vec![0.5]).is_err());
    assert!(Window::gaussian(0.2, vec![0.5, 0.2]).is_err());
    assert!(Window::gaussian(0.2, vec![0.5, 0.5]).is_err());
    assert!(Window::gaussian(0.2, vec![]).is_err());
    assert!(Window::monomial(0).is_err());
}

#[test]
fn forward_examples() {
    let w = Window::gaussian(0.2, vec![0.0, 0.5, 1.0]).unwrap();
    assert_eq!(forward(&w, &AtomicMeasure::empty()), DMatrix::zeros(3, 3));

    let x = AtomicMeasure::from_triples(&[(0.5, 1.0, 2.5)]).unwrap();
    assert_relative_eq!(forward(&w, &x)[(1, 2)], 2.5, epsilon = 1e-15);

    let y = forward(&w, &AtomicMeasure::from_triples(&[(0.5, 0.5, 1.0)]).unwrap());
    assert_relative_eq!(y[(1, 1)], 1.0);
    assert_relative_eq!(y[(0, 1)], (-6.25f64).exp(), max_relative = 1e-14);
    assert_relative_eq!(y[(1, 0)], (-6.25f64).exp(), max_relative = 1e-14);
    assert_relative_eq!(y[(0, 0)], (-12.5f64).exp(), max_relative = 1e-14);
    assert_eq!(y, y.transpose());
}

#[test]
fn noise_has_exact_norm() {
    let w = Window::gaussian_uniform(0.2, 5).unwrap();
    let y = forward(&w, &AtomicMeasure::from_triples(&[(0.3, 0.6, 1.0)]).unwrap());
    let o = add_noise(&y, 0.0, 1).unwrap();
    assert_eq!(o.y, y);
    let o = add_noise(&y, 0.1, 1).unwrap();
    assert!(((&o.y - &y).norm() - 0.1).abs() <= 1e-12);
    assert_eq!(o.delta, 0.1);
    assert_eq!(add_noise(&y, 0.1, 1).unwrap(), o);
    assert_ne!(add_noise(&y, 0.1, 2).unwrap(), o);
    assert!(add_noise(&y, -0.1, 1).is_err());
}

#[test]
fn lipschitz_examples() {
    let w = Window::gaussian_uniform(0.2, 8).unwrap();
    assert_relative_eq!(lipschitz(&w), (16.0 / (0.04 * std::f64::consts::E)).sqrt(), epsilon = 1e-12);
    assert_relative_eq!(lipschitz(&w), 12.13, epsilon = 5e-3);
    let wide = Window::gaussian_uniform(0.4, 8).unwrap();
    assert_relative_eq!(lipschitz(&wide), lipschitz(&w) / 2.0, epsilon = 1e-12);
    let flat = Window::tabulated(vec![0.0, 1.0], vec![vec![1.0, 1.0]]).unwrap();
    assert!(lipschitz(&flat) >= 1.0 - 1e-12);
}

#[test]
fn design_matrix_examples() {
    let w = Window::gaussian_uniform(0.2, 5).unwrap();
    let pts = [Point::new(0.2, 0.3), Point::new(0.5, 0.8), Point::new(0.8, 0.4)];
    let a = design_matrix(&w, &pts);
    assert_eq!(a.shape(), (25, 3));
    let sv = a.clone().svd(false, false).singular_values;
    assert!(sv[2] / sv[0] > 1e-10);

    let one = design_matrix(&w, &pts[..1]);
    assert!(one.norm() > 0.0);

    let dup = design_matrix(&w, &[pts[0], pts[0]]);
    let sv = dup.svd(false, false).singular_values;
    assert!(sv.min() / sv.max() < 1e-12);
}

#[test]
fn design_columns_are_kronecker_products() {
    let w = Window::gaussian_uniform(0.2, 4).unwrap();
    let p = Point::new(0.37, 0.81);
    let col = design_matrix(&w, &[p]);
    let a = w.eval_vec(p.t);
    let b = w.eval_vec(p.s);
    for m in 0..4 {
        for n in 0..4 {
            assert!((col[(m * 4 + n, 0)] - a[m] * b[n]).abs() <= 1e-12);
        }
    }
    let y = phi_matrix(&w, &p);
    assert_eq!(unvectorize(&vectorize(&y), 4), y);
    assert!((vectorize(&y) - col.column(0)).norm() <= 1e-12);
}

fn arb(max: usize) -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, 0.05f64..2.0), 0..=max)
        .prop_map(|v| AtomicMeasure::from_triples(&v).unwrap())
}

proptest! {
    #[test]
    fn forward_is_linear(a in arb(4), b in arb(4)) {
        let w = Window::gaussian_uniform(0.2, 6).unwrap();
        let lhs = forward(&w, &a.union(&b));
        let rhs = forward(&w, &a) + forward(&w, &b);
        prop_assert!((lhs - rhs).amax() <= 1e-12);
    }

    #[test]
    fn gaussian_sampling_identity(x in arb(4), sigma in 0.05f64..0.6, m in 2usize..8) {
        let w = Window::gaussian_uniform(sigma, m).unwrap();
        let y = forward(&w, &x);
        let c: Vec<f64> = (0..m).map(|i| i as f64 / (m - 1) as f64).collect();
        for i in 0..m {
            for j in 0..m {
                let v: f64 = x.atoms().iter().map(|a| {
                    let d2 = (a.loc.t - c[i]).powi(2) + (a.loc.s - c[j]).powi(2);
                    a.weight * (-d2 / (sigma * sigma)).exp()
                }).sum();
                prop_assert!((y[(i, j)] - v).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn symmetric_measure_gives_symmetric_image(x in arb(4)) {
        let w = Window::gaussian_uniform(0.25, 5).unwrap();
        let sym = x.union(&x.transpose());
        let y = forward(&w, &sym);
        prop_assert!((&y - y.transpose()).amax() <= 1e-12);
    }
}
