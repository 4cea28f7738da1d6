use carnot_core::asymptotics::window_average_from_prefixes;
use carnot_core::control::{develop, dilate_control};
use carnot_core::pmp::{integrate_extremal, ExtremalProblem};
use carnot_core::{ControlSignal, GroupPoint, NormModel, Selection, StepTwoAlgebra};
use proptest::prelude::*;

fn coords(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, n)
}

fn point(r: usize, m: usize) -> impl Strategy<Value = GroupPoint> {
    (coords(r), coords(m)).prop_map(|(x, z)| GroupPoint::new(x, z))
}

/// Dual norm by brute force over directions on the unit circle; first-order accurate at kinks.
fn dual_norm_scan(norm: &NormModel, a: &[f64]) -> f64 {
    (0..20_000)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / 20_000.0;
            let x = [t.cos(), t.sin()];
            (a[0] * x[0] + a[1] * x[1]) / norm.norm(&x).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

fn norms_r2() -> Vec<NormModel> {
    vec![
        NormModel::euclidean_identity(2),
        NormModel::euclidean(2, vec![2.0, 0.5, 0.5, 1.0]).unwrap(),
        NormModel::lp(2, 1.5).unwrap(),
        NormModel::lp(2, 4.0).unwrap(),
        NormModel::linf(2),
        NormModel::l1(2),
        NormModel::polyhedral(vec![vec![1.0, 0.0], vec![0.5, 1.0], vec![-1.0, 0.5], vec![-1.0, 0.0], vec![-0.5, -1.0], vec![1.0, -0.5]])
            .unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn group_laws_hold(g in point(3, 3), h in point(3, 3), k in point(3, 3), l in 0.1..4.0f64) {
        let alg = StepTwoAlgebra::free_step_two(3).unwrap();
        let lhs = alg.multiply(&alg.multiply(&g, &h).unwrap(), &k).unwrap();
        let rhs = alg.multiply(&g, &alg.multiply(&h, &k).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
        let e = alg.identity();
        prop_assert!(alg.multiply(&g, &alg.inverse(&g).unwrap()).unwrap().max_abs_diff(&e) < 1e-12);
        let d1 = alg.dilate(l, &alg.multiply(&g, &h).unwrap()).unwrap();
        let d2 = alg.multiply(&alg.dilate(l, &g).unwrap(), &alg.dilate(l, &h).unwrap()).unwrap();
        prop_assert!(d1.max_abs_diff(&d2) < 1e-12);
    }

    #[test]
    fn heisenberg_product_matches_closed_form(g in point(2, 1), h in point(2, 1)) {
        let alg = StepTwoAlgebra::heisenberg(1).unwrap();
        let p = alg.multiply(&g, &h).unwrap();
        let z = g.z[0] + h.z[0] + 0.5 * (g.x[0] * h.x[1] - g.x[1] * h.x[0]);
        prop_assert!((p.x[0] - g.x[0] - h.x[0]).abs() < 1e-15);
        prop_assert!((p.x[1] - g.x[1] - h.x[1]).abs() < 1e-15);
        prop_assert!((p.z[0] - z).abs() < 1e-13);
    }

    #[test]
    fn development_is_left_invariant(data in coords(4 * 40), g in point(4, 1), start in point(4, 1)) {
        let alg = StepTwoAlgebra::heisenberg(2).unwrap();
        let u = ControlSignal::new(0.05, 4, data).unwrap();
        let a = develop(&alg, &alg.multiply(&g, &start).unwrap(), &u).unwrap();
        let b = develop(&alg, &start, &u).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            prop_assert!(p.max_abs_diff(&alg.multiply(&g, q).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn dilated_control_develops_dilated_curve(data in coords(3 * 30), l in 0.2..5.0f64) {
        let alg = StepTwoAlgebra::free_step_two(3).unwrap();
        let u = ControlSignal::new(0.1, 3, data).unwrap();
        let base = develop(&alg, &alg.identity(), &u).unwrap();
        let scaled = develop(&alg, &alg.identity(), &dilate_control(&u, l).unwrap()).unwrap();
        for (p, q) in scaled.points.iter().zip(&base.points) {
            prop_assert!(p.max_abs_diff(&alg.dilate(1.0 / l, q).unwrap()) < 1e-10);
        }
    }

    #[test]
    fn norm_duality_and_feedback(a in coords(2), x in coords(2), which in 0usize..7) {
        let norm = &norms_r2()[which];
        prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
        let dn = norm.dual_norm(&a).unwrap();
        let scan = dual_norm_scan(norm, &a);
        prop_assert!(scan <= dn * (1.0 + 1e-12) && scan >= dn * (1.0 - 1e-3), "{dn} vs scan {scan}");
        let ax = a[0] * x[0] + a[1] * x[1];
        prop_assert!(ax.abs() <= norm.norm(&x).unwrap() * dn + 1e-12);
        let u = norm.feedback_control(&a, &Selection::Barycenter).unwrap();
        let nu = norm.norm(&u).unwrap();
        let au = a[0] * u[0] + a[1] * u[1];
        prop_assert!((nu - dn).abs() < 1e-9 * dn.max(1.0));
        prop_assert!((au - nu * nu).abs() < 1e-9 * dn.max(1.0).powi(2));
        prop_assert!(norm.subdiff_gap(&u, &a).unwrap() < 1e-9 * dn.max(1.0).powi(2));
    }

    #[test]
    fn prefix_identity(data in coords(2 * 500), a in 0.0..0.5f64, w in 0.05..0.5f64, l in 1.0..5.0f64) {
        let u = ControlSignal::new(0.01, 2, data).unwrap();
        let b = a + w;
        let direct = u.average(a * l, b * l).unwrap();
        let via = window_average_from_prefixes(&u, a, b, l).unwrap();
        prop_assert!((direct[0] - via[0]).abs() < 1e-10 && (direct[1] - via[1]).abs() < 1e-10);
    }
}

#[test]
fn heisenberg_euclidean_duals_rotate_at_rate_b() {
    let alg = StepTwoAlgebra::heisenberg(1).unwrap();
    let norm = NormModel::euclidean_identity(2);
    for (a0, b) in [([0.6, -0.8], 1.7), ([-0.3, 0.2], -0.9), ([1.0, 1.0], 0.25)] {
        let dt = 1e-3;
        let ex = integrate_extremal(&alg, &norm, &ExtremalProblem::from_identity(&alg, a0.to_vec(), vec![b], 5.0, dt)).unwrap();
        for k in (0..=ex.len()).step_by(97) {
            let t = k as f64 * dt;
            let (c, s) = ((b * t).cos(), (b * t).sin());
            let expect = [c * a0[0] - s * a0[1], s * a0[0] + c * a0[1]];
            let got = ex.dual(k);
            assert!((got[0] - expect[0]).abs() < 1e-10 && (got[1] - expect[1]).abs() < 1e-10, "t={t}: {got:?} vs {expect:?}");
        }
    }
}

#[test]
fn circle_endpoint_encloses_its_area() {
    // u = (cos t, sin t) on [0, T]: x = (sin T, 1 − cos T), z = ½(T − sin T)
    let alg = StepTwoAlgebra::heisenberg(1).unwrap();
    let dt = 1e-5;
    let n = 300_000;
    let u = ControlSignal::from_fn(dt, n, 2, |t| {
        let m = t + 0.5 * dt;
        vec![m.cos(), m.sin()]
    })
    .unwrap();
    let end = develop(&alg, &alg.identity(), &u).unwrap().end().clone();
    let t = n as f64 * dt;
    assert!((end.x[0] - t.sin()).abs() < 1e-8);
    assert!((end.x[1] - (1.0 - t.cos())).abs() < 1e-8);
    assert!((end.z[0] - 0.5 * (t - t.sin())).abs() < 1e-8);
}
