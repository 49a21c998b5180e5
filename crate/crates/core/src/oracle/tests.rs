use super::*;
use crate::linalg::ONE;

#[test]
fn suite_passes() {
    for c in validate().unwrap() {
        assert!(c.passed(), "{c:?}");
    }
}

#[test]
fn operator_is_hermitian_with_zero_row_sums() {
    let op = GridSpec::circle(1.0, 16, |_| 0.0).build().unwrap();
    let a = op.dense();
    assert!((&a - a.adjoint()).iter().all(|z| z.norm() < 1e-12));
    for i in 0..16 {
        assert!(a.row(i).iter().sum::<C64>().norm() < 1e-9);
    }
    let m = GridSpec::circle(1.0, 16, |x| x.sin()).with_flux(0.3).build().unwrap().dense();
    assert!((&m - m.adjoint()).iter().all(|z| z.norm() < 1e-12));
}

#[test]
fn sturm_matches_dense_eigen() {
    let spec = GridSpec::interval(-3.0, 4.0, 60, |y| y * y * 0.3 + y.sin());
    let op = spec.build().unwrap();
    let dense = crate::linalg::lambda_min(&op.dense());
    assert!((op.lowest_eigenvalue().unwrap() - dense).abs() < 1e-10);
}

#[test]
fn inverse_iteration_matches_dense_eigen() {
    let op = GridSpec::circle(1.3, 50, |y| (2.0 * y).cos()).with_flux(0.2).build().unwrap();
    let dense = crate::linalg::lambda_min(&op.dense());
    assert!((op.lowest_eigenvalue().unwrap() - dense).abs() < 1e-10);
}

#[test]
fn dirichlet_box_ground_energy() {
    // −½u'' on (0, π): lowest eigenvalue 1/2
    let e = grid_ground_energy(&GridSpec::interval(0.0, PI, 400, |_| 0.0)).unwrap();
    assert!((e - 0.5).abs() < 1e-9, "{e}");
}

#[test]
fn phases_on_interval_are_gauge_trivial() {
    let plain = GridSpec::interval(-5.0, 5.0, 200, |y| 0.5 * y * y).build().unwrap();
    let twisted = GridSpec::interval(-5.0, 5.0, 200, |y| 0.5 * y * y).with_beta(|y| 2.0 + y).build().unwrap();
    assert!((plain.lowest_eigenvalue().unwrap() - crate::linalg::lambda_min(&twisted.dense())).abs() < 1e-9);
}

#[test]
fn too_large_grids_refused() {
    assert!(grid_ground_energy(&GridSpec::interval(0.0, 1.0, 5000, |_| 0.0)).is_err());
    let op = GridSpec::circle(1.0, 2000, |_| 0.0).build().unwrap();
    assert!(op.semigroup_apply(&vec![ONE; 2000], 1.0).is_err());
}

#[test]
fn semigroup_at_zero_time_is_identity() {
    let op = GridSpec::interval(0.0, 1.0, 10, |y| y).build().unwrap();
    let f: Vec<C64> = (0..10).map(|j| C64::new(j as f64, -1.0)).collect();
    assert_eq!(op.semigroup_apply(&f, 0.0).unwrap(), f);
}

#[test]
fn fourier_mode_decays_diagonally() {
    // the discrete mode is exact: rate (1 − cos kh)/h²
    let spec = GridSpec::circle(1.0, 64, |_| 0.0);
    let h = spec.spacing();
    let f: Vec<C64> = spec.points().iter().map(|&x| C64::from_polar(1.0, 3.0 * x)).collect();
    let g = spec.build().unwrap().semigroup_apply(&f, 0.4).unwrap();
    let rate = (1.0 - (3.0 * h).cos()) / (h * h);
    for (a, b) in g.iter().zip(&f) {
        assert!((a - b * (-0.4 * rate).exp()).norm() < 1e-12);
    }
}

#[test]
fn mehler_reference_values() {
    assert!((mehler_kernel(1.0, 1.0, 0.0, 0.0) - 0.3680051987075608).abs() < 1e-15);
    // ground state is an eigenfunction: ∫ p_t(0,y) φ(y) dy = e^{-t/2} φ(0)
    let v = crate::quad::tanh_sinh(|y| mehler_kernel(1.0, 1.0, 0.0, y) * oscillator_ground_state(y), -12.0, 12.0, 1e-14);
    assert!((v - (-0.5f64).exp() * oscillator_ground_state(0.0)).abs() < 1e-12);
    assert!((oscillator_ground_state(0.0) * (-0.5f64).exp() - 0.45558).abs() < 5e-6);
}

#[test]
fn heat_on_gaussian_matches_quadrature() {
    let (t, x) = (0.7, 0.4);
    let q = crate::quad::tanh_sinh(
        |y| (-(x - y) * (x - y) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt() * (-y * y / 2.0).exp(),
        -15.0,
        15.0,
        1e-14,
    );
    assert!((heat_on_gaussian(t, x, 1.0) - q).abs() < 1e-12);
    assert!((heat_on_gaussian(1.0, 0.0, 1.0) - 0.5f64.sqrt()).abs() < 1e-15);
}

#[test]
fn exit_survival_reference() {
    assert!((two_sided_survival(1.0, 1.0) - 0.3708).abs() < 1e-4);
    for t in [0.01, 0.1, 0.5, 2.0] {
        assert!((two_sided_survival(1.0, t) - two_sided_survival_images(1.0, t)).abs() < 1e-12, "{t}");
    }
    assert!(two_sided_survival_images(1.0, 1e-4) > 1.0 - 1e-12);
}

#[test]
fn survival_matches_dirichlet_grid() {
    // P{sup|W| < 1} = (e^{-tH} 1)(0) with Dirichlet ends at ±1
    let spec = GridSpec::interval(-1.0, 1.0, 255, |_| 0.0);
    let flow = grid_semigroup(&spec, |_| ONE, 1.0).unwrap();
    assert!((flow[127].re - two_sided_survival(1.0, 1.0)).abs() < 1e-6);
}

#[test]
fn circle_magnetic_closed_forms() {
    assert_eq!(circle_magnetic_ground_energy(1.0, 0.5), 0.125);
    assert!((circle_magnetic_ground_energy(2.0, 1.25) - 0.0625 / 8.0).abs() < 1e-15);
    // f ≡ 1 decays like e^{-a²t/2}
    let v = circle_magnetic_semigroup(1.0, 0.5, 2.0, &[(0, ONE)], 0.3);
    assert!((v.re - (-0.25f64).exp()).abs() < 1e-15 && v.im == 0.0);
}

#[test]
fn zonal_probe_flow() {
    assert!((legendre(3, 0.4) - 0.5 * (5.0 * 0.064 - 3.0 * 0.4)).abs() < 1e-15);
    let p = ZonalProbe { radius: 1.0, terms: vec![(1.0, 0, [0.0, 0.0, 1.0]), (2.0, 2, [1.0, 0.0, 0.0])] };
    let y = [0.6, 0.0, 0.8];
    assert!((p.eval(&y) - (1.0 + 2.0 * legendre(2, 0.6))).abs() < 1e-15);
    assert!((p.heat(1.0, &y) - (1.0 + 2.0 * (-3.0f64).exp() * legendre(2, 0.6))).abs() < 1e-15);
}

#[test]
fn oracle_sphere_series_vs_zonal_flow() {
    // P_t applied to a zonal P_2 via the heat kernel equals the spectral decay
    let m = crate::geometry::Manifold::sphere2(1.0).unwrap();
    let x = m.origin();
    let u = [0.0, 0.0, 1.0];
    let probe = ZonalProbe { radius: 1.0, terms: vec![(1.0, 2, u)] };
    let t = 0.3;
    let mut total = 0.0;
    for (y, w) in m.volume_rule(48).unwrap() {
        let c = y.coords();
        total += w * m.heat_kernel(t, &x, &y).unwrap() * probe.eval(&[c[0], c[1], c[2]]);
    }
    let xc = x.coords();
    assert!((total - probe.heat(t, &[xc[0], xc[1], xc[2]])).abs() < 1e-8, "{total}");
}
