//! Property tests for the parametrization, linear algebra and momentum model.

use jerkctl::linalg::{block_diag, nullspace_projector, pinv, rank, Mat};
use jerkctl::momentum::{contact_map, hdot, hddot, contact_map_dot, plant_step_held, ContactFrame, MomentumState};
use jerkctl::wrench::{
    check_constraints, phi, phi_gradient, phi_inverse, phi_inverse_checked, stack_gradient, stack_phi, XI3_CAP,
};
use jerkctl::{ContactGeometry, SaturationPolicy, Wrench, WrenchStack, Xi, XiStack};
use nalgebra::{DVector, Vector3, Vector6};
use proptest::prelude::*;

fn geometry() -> impl Strategy<Value = ContactGeometry> {
    (0.05..2.0f64, 0.001..0.1f64, 0.0..100.0f64, -0.3..0.1f64, 0.005..0.4f64, -0.2..0.05f64, 0.005..0.3f64)
        .prop_map(|(mu, mz, fmin, x0, dx, y0, dy)| ContactGeometry::new(mu, mz, fmin, x0, x0 + dx, y0, y0 + dy).unwrap())
}

fn xi(half: f64) -> impl Strategy<Value = Xi> {
    prop::array::uniform6(-half..half).prop_map(|a| Xi::from_slice(&a))
}

fn matrix(max_dim: usize) -> impl Strategy<Value = Mat> {
    (1..=max_dim, 1..=max_dim)
        .prop_flat_map(|(r, c)| (Just(r), Just(c), prop::collection::vec(-3.0..3.0f64, r * c)))
        .prop_map(|(r, c, v)| Mat::from_vec(r, c, v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn every_xi_gives_a_stable_wrench(x in xi(15.0), g in geometry()) {
        let w = phi(&x, &g);
        prop_assert!(w.is_finite());
        let report = check_constraints(&w, &g);
        prop_assert!(report.all_satisfied(), "{:?}", report);
    }

    // Past |ξ| ≈ 19 tanh rounds to ±1, so the strict inequalities can only
    // hold with equality.
    #[test]
    fn huge_xi_stays_on_the_closed_set(x in xi(1e3), g in geometry()) {
        let w = phi(&x, &g);
        prop_assert!(w.is_finite());
        let scale = 1.0 + w.fz().abs();
        for m in check_constraints(&w, &g).margins() {
            prop_assert!(m >= -1e-12 * scale, "margin {}", m);
        }
    }

    #[test]
    fn round_trip_inside_the_image(x in xi(5.0), g in geometry()) {
        let back = phi_inverse(&phi(&x, &g), &g, &SaturationPolicy::disabled()).unwrap();
        prop_assert!((back.0 - x.0).amax() < 1e-8);
    }

    #[test]
    fn saturated_inverse_is_finite_for_any_wrench(
        w in prop::array::uniform6(-1e3..1e3f64),
        g in geometry(),
    ) {
        let w = Wrench::new(w[0], w[1], w[2], w[3], w[4], w[5]);
        let inv = phi_inverse_checked(&w, &g, &SaturationPolicy::default()).unwrap();
        prop_assert!(inv.xi.0.iter().all(|v| v.is_finite()));
        prop_assert!(check_constraints(&phi(&inv.xi, &g), &g).all_satisfied());
    }

    #[test]
    fn normal_force_saturates_at_the_cap(x in xi(5.0), extra in 0.0..100.0f64, g in geometry()) {
        let mut hi = x;
        hi.0[2] = XI3_CAP + extra;
        let mut at = x;
        at.0[2] = XI3_CAP;
        prop_assert_eq!(phi(&hi, &g), phi(&at, &g));
        prop_assert!(phi_gradient(&hi, &g).determinant().abs() > 0.0);
    }

    #[test]
    fn stacked_gradient_is_block_diagonal(a in xi(3.0), b in xi(3.0), g in geometry(), h in geometry()) {
        let stack = XiStack(vec![a, b]);
        let big = stack_gradient(&stack, &[g, h]).unwrap();
        let (ga, gb) = (phi_gradient(&a, &g), phi_gradient(&b, &h));
        prop_assert!((big.view((0, 0), (6, 6)) - ga).amax() == 0.0);
        prop_assert!((big.view((6, 6), (6, 6)) - gb).amax() == 0.0);
        prop_assert!(big.view((0, 6), (6, 6)).amax() == 0.0 && big.view((6, 0), (6, 6)).amax() == 0.0);
    }

    #[test]
    fn penrose_conditions(m in matrix(6)) {
        let p = pinv(&m, 1e-10).unwrap();
        let scale = 1.0 + m.amax() * p.amax();
        prop_assert!((&m * &p * &m - &m).amax() < 1e-9 * scale * m.amax().max(1.0));
        prop_assert!((&p * &m * &p - &p).amax() < 1e-9 * scale * p.amax().max(1.0));
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!((&mp - mp.transpose()).amax() < 1e-9 * scale);
        prop_assert!((&pm - pm.transpose()).amax() < 1e-9 * scale);
    }

    #[test]
    fn nullspace_projector_properties(m in matrix(6)) {
        let n = nullspace_projector(&m, 1e-10).unwrap();
        prop_assert!((&m * &n).amax() < 1e-9 * (1.0 + m.amax()));
        prop_assert!((&n * &n - &n).amax() < 1e-9);
        prop_assert!((&n - n.transpose()).amax() < 1e-9);
        let r = rank(&m, 1e-10).unwrap();
        prop_assert!((n.trace() - (m.ncols() - r) as f64).abs() < 1e-8);
    }

    #[test]
    fn block_diag_determinant(a in matrix(4), b in matrix(4)) {
        let a = &a * a.transpose();
        let b = &b * b.transpose();
        let d = block_diag(&[a.clone(), b.clone()]).unwrap();
        let expected = a.determinant() * b.determinant();
        prop_assert!((d.determinant() - expected).abs() <= 1e-9 * (1.0 + expected.abs()));
    }

    #[test]
    fn contact_map_is_net_wrench_about_com(
        o1 in prop::array::uniform3(-1.0..1.0f64),
        o2 in prop::array::uniform3(-1.0..1.0f64),
        com in prop::array::uniform3(-1.0..1.0f64),
        w1 in prop::array::uniform6(-10.0..10.0f64),
        w2 in prop::array::uniform6(-10.0..10.0f64),
    ) {
        let g = ContactGeometry::default();
        let frames = [ContactFrame::rigid(Vector3::from(o1), g), ContactFrame::rigid(Vector3::from(o2), g)];
        let com = Vector3::from(com);
        let a = contact_map(&frames, &com).unwrap();
        let f = WrenchStack(vec![Wrench(Vector6::from(w1)), Wrench(Vector6::from(w2))]);
        let got = hdot(&f, &a, 2.0, 9.81).unwrap();
        let mut force = Vector3::zeros();
        let mut moment = Vector3::zeros();
        for (o, w) in [(o1, w1), (o2, w2)] {
            let lin = Vector3::new(w[0], w[1], w[2]);
            force += lin;
            moment += (Vector3::from(o) - com).cross(&lin) + Vector3::new(w[3], w[4], w[5]);
        }
        force.z -= 2.0 * 9.81;
        prop_assert!((got.fixed_rows::<3>(0) - force).amax() < 1e-12);
        prop_assert!((got.fixed_rows::<3>(3) - moment).amax() < 1e-12);
    }
}

/// `Ḧ` agrees with a central difference of `Ḣ(t)` along `ξ(t) = ξ + ξ̇ t`
/// and `com(t) = com + v t`.
#[test]
fn hddot_matches_time_derivative_of_hdot() {
    let g = ContactGeometry::new(0.6, 0.02, 5.0, -0.1, 0.12, -0.05, 0.06).unwrap();
    let frames = [
        ContactFrame::rigid(Vector3::new(0.0, 0.1, 0.0), g),
        ContactFrame::rigid(Vector3::new(0.05, -0.1, 0.02), g),
    ];
    let xi0 = XiStack(vec![
        Xi(Vector6::new(0.3, -0.2, 4.0, 0.1, -0.4, 0.2)),
        Xi(Vector6::new(-0.5, 0.1, 3.5, -0.2, 0.3, 0.0)),
    ]);
    let xi_dot = DVector::from_fn(12, |i, _| ((i as f64) * 0.7).sin());
    let com0 = Vector3::new(0.01, 0.02, 0.8);
    let v = Vector3::new(0.1, -0.05, 0.02);
    let hdot_at = |t: f64| {
        let xis = XiStack(
            xi0.0.iter().enumerate().map(|(k, x)| Xi(x.0 + xi_dot.rows(6 * k, 6) * t)).collect(),
        );
        let f = stack_phi(&xis, &[g, g]).unwrap();
        hdot(&f, &contact_map(&frames, &(com0 + v * t)).unwrap(), 30.0, 9.81).unwrap()
    };
    let h = 1e-5;
    let fd = (hdot_at(h) - hdot_at(-h)) / (2.0 * h);
    let f = stack_phi(&xi0, &[g, g]).unwrap();
    let a = contact_map(&frames, &com0).unwrap();
    let a_dot = contact_map_dot(&frames, &v).unwrap();
    let analytic = hddot(&xi0, &xi_dot, &f, &[g, g], &a, &a_dot).unwrap();
    assert!((analytic - fd).amax() < 1e-5 * (1.0 + analytic.amax()), "{analytic} vs {fd}");
}

/// A wrench that exactly cancels gravity keeps the momentum at rest and the
/// CoM fixed.
#[test]
fn plant_is_at_rest_under_balanced_wrench() {
    let g = ContactGeometry::default();
    let frames = [ContactFrame::rigid(Vector3::zeros(), g)];
    let state = MomentumState::new(20.0, Vector3::new(0.0, 0.0, 0.9)).unwrap();
    let w = Wrench::new(0.0, 0.0, 20.0 * state.gravity, 0.0, 0.0, 0.0);
    let xis = XiStack(vec![phi_inverse(&w, &g, &SaturationPolicy::disabled()).unwrap()]);
    let mut s = state;
    let mut x = xis;
    for _ in 0..1000 {
        let (next, nx) = plant_step_held(&s, &frames, &x, &DVector::zeros(6), 1e-3, &Vector6::zeros(), None).unwrap();
        s = next;
        x = nx;
    }
    assert!(s.h.amax() < 1e-9);
    assert!((s.com - state.com).amax() < 1e-12);
}

/// Constant net force `F` gives `H_lin(t) = F t` and `com(t) = com + F t²/(2m)`.
#[test]
fn plant_integrates_constant_force_exactly() {
    let g = ContactGeometry::default();
    let frames = [ContactFrame::rigid(Vector3::zeros(), g)];
    let state = MomentumState::new(10.0, Vector3::new(0.0, 0.0, 1.0)).unwrap();
    let w = Wrench::new(3.0, -2.0, 10.0 * state.gravity + 5.0, 0.0, 0.0, 0.0);
    let xis = XiStack(vec![phi_inverse(&w, &g, &SaturationPolicy::disabled()).unwrap()]);
    let mut s = state;
    let mut x = xis;
    let dt = 1e-2;
    for _ in 0..100 {
        let (next, nx) = plant_step_held(&s, &frames, &x, &DVector::zeros(6), dt, &Vector6::zeros(), None).unwrap();
        s = next;
        x = nx;
    }
    let force = Vector3::new(3.0, -2.0, 5.0);
    assert!((s.h.fixed_rows::<3>(0) - force).amax() < 1e-9);
    let expected_com = state.com + force / (2.0 * state.mass);
    assert!((s.com - expected_com).amax() < 1e-9);
}
