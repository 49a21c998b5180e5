use super::*;
use crate::bundle::Bundle;
use crate::field::{coulomb, KatoClass, ScalarField};
use crate::paths::sample_path;
use crate::rng::RngKey;
use proptest::prelude::{prop_assert, proptest};

fn euclidean_path(d: usize, t: f64, h: f64, seed: u64) -> (Manifold, PathSample) {
    let m = Manifold::euclidean(2).unwrap();
    let b = Bundle::trivial(d).unwrap();
    let p = sample_path(&m, &b, &m.origin(), t, h, RngKey::new(seed, 0)).unwrap();
    (m, p)
}

/// Bounded Hermitian field `A + x₀B + x₁C` with random coefficients.
fn random_field(d: usize, seed: u64, scale: f64) -> Potential {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = linalg::random_hermitian(&mut rng, d, scale);
    let b = linalg::random_hermitian(&mut rng, d, scale);
    let c = linalg::random_hermitian(&mut rng, d, scale);
    Potential::matrix(
        "random",
        d,
        move |x: &Point| {
            let y = x.coords();
            &a + &b * C64::new(y[0], 0.0) + &c * C64::new(y[1], 0.0)
        },
        KatoClass::Bounded,
        KatoClass::Bounded,
        vec![],
    )
    .unwrap()
}

fn sphere_path(t: f64, seed: u64) -> (Manifold, PathSample) {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::levi_civita(&m).unwrap();
    let p = sample_path(&m, &b, &m.point(&[0.6, 0.0, 0.8]).unwrap(), t, 1e-3, RngKey::new(seed, 3)).unwrap();
    (m, p)
}

#[test]
fn zero_potential_gives_identity() {
    let (m, p) = euclidean_path(3, 0.5, 1e-3, 1);
    let tr = evolve_holonomy(&m, &p, &Potential::zero(3)).unwrap();
    assert!(tr.values.iter().all(|v| *v == linalg::identity(3)));
}

#[test]
fn constant_scalar_potential() {
    let (m, p) = euclidean_path(2, 1.0, 1e-3, 2);
    let c = 0.7;
    let v = Potential::scalar(ScalarField::constant(c), 2, KatoClass::Bounded, KatoClass::Bounded);
    let tr = evolve_holonomy(&m, &p, &v).unwrap();
    let want = linalg::identity(2) * C64::new((-c).exp(), 0.0);
    assert!(linalg::max_abs_diff(tr.endpoint(), &want) < 1e-12);
}

#[test]
fn constant_matrix_potential_matches_matrix_exponential() {
    let (m, p) = euclidean_path(3, 0.8, 1e-3, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w = linalg::random_hermitian(&mut rng, 3, 1.5);
    let w2 = w.clone();
    let v = Potential::matrix("const", 3, move |_: &Point| w2.clone(), KatoClass::Bounded, KatoClass::Bounded, vec![]).unwrap();
    let tr = evolve_holonomy(&m, &p, &v).unwrap();
    let want = linalg::expm(&(w * C64::new(-0.8, 0.0)));
    assert!(linalg::max_abs_diff(tr.endpoint(), &want) < 1e-10);
}

#[test]
fn trace_invariants_on_sphere() {
    let (m, p) = sphere_path(1.0, 4);
    let v = random_field(2, 5, 2.0);
    let tr = evolve_holonomy(&m, &p, &v).unwrap();
    let id = linalg::identity(2);
    assert_eq!(tr.values[0], id);
    let dts = tr.dts();
    let mut l1 = 0.0;
    for k in 0..tr.len() {
        assert!(linalg::max_abs_diff(&(&tr.inverses[k] * &tr.values[k]), &id) < 1e-9);
        let n = linalg::op_norm(&tr.values[k]);
        // domination by the scalar floor, and the plain growth bound
        assert!(n <= (-tr.floor_integral[k]).exp() * (1.0 + 1e-12) + 1e-9, "k={k}");
        assert!(n <= f64::exp(l1) + 1e-9);
        if k < dts.len() {
            l1 += dts[k] * linalg::op_norm(&tr.frame_fields[k]);
            assert!(linalg::hermitian_defect(&tr.frame_fields[k]) < 1e-12);
        }
    }
    // inverse growth: ‖𝒱_k⁻¹ 𝒱_K‖ ≤ exp ∫_{t_k}^{t_K} ‖V⁽²⁾‖
    let last = tr.len() - 1;
    for k in (0..tr.len()).step_by(50) {
        let lhs = linalg::op_norm(&(&tr.inverses[k] * tr.endpoint()));
        let rhs = (tr.negative_integral[last] - tr.negative_integral[k]).exp();
        assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-9);
    }
}

#[test]
fn singular_matrix_potential_agrees_with_scalar_form() {
    let m = Manifold::euclidean(3).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let x = Point::intrinsic(&[0.2, 0.0, 0.0]);
    let p = sample_path(&m, &b, &x, 0.2, 1e-4, RngKey::new(6, 0)).unwrap();
    let v = coulomb(-1.0, Point::intrinsic(&[0.0, 0.0, 0.0]));
    let scalar = Potential::scalar(v.clone(), 1, KatoClass::Kato, KatoClass::Bounded);
    let vv = v.clone();
    let matrix = Potential::matrix(
        "coulomb",
        1,
        move |y: &Point| CMatrix::from_element(1, 1, C64::new(vv.eval(y), 0.0)),
        KatoClass::Kato,
        KatoClass::Bounded,
        vec![Point::intrinsic(&[0.0, 0.0, 0.0])],
    )
    .unwrap();
    let a = evolve_holonomy(&m, &p, &scalar).unwrap();
    let b = evolve_holonomy(&m, &p, &matrix).unwrap();
    assert!((a.endpoint()[(0, 0)] - b.endpoint()[(0, 0)]).norm() < 1e-12 * a.endpoint()[(0, 0)].norm());
    assert!((a.floor_integral.last().unwrap() - b.floor_integral.last().unwrap()).abs() < 1e-10);
}

#[test]
fn nan_potential_is_located() {
    let (m, p) = euclidean_path(2, 0.1, 1e-3, 7);
    let v = Potential::matrix(
        "bad",
        2,
        |x: &Point| {
            if x.coords()[0] > 0.0 {
                CMatrix::from_element(2, 2, C64::new(f64::NAN, 0.0))
            } else {
                CMatrix::zeros(2, 2)
            }
        },
        KatoClass::Bounded,
        KatoClass::Bounded,
        vec![],
    )
    .unwrap();
    match evolve_holonomy(&m, &p, &v) {
        Err(Error::NonFinite { step, .. }) => assert!(step > 0),
        other => panic!("expected a located error, got {other:?}"),
    }
}

#[test]
fn oversized_rank_is_refused() {
    let r = Potential::matrix("big", 17, |_: &Point| CMatrix::zeros(17, 17), KatoClass::Bounded, KatoClass::Bounded, vec![]);
    assert!(matches!(r, Err(Error::UnsupportedRank(17))));
}

/// Endpoint along a fixed smooth curve sampled with step `h`.
fn smooth_endpoint(h: f64) -> CMatrix {
    let m = Manifold::euclidean(2).unwrap();
    let n = (1.0 / h).round() as usize;
    let curve = |s: f64| Point::intrinsic(&[(3.0 * s).cos(), (2.0 * s).sin()]);
    let path = PathSample {
        times: (0..=n).map(|k| k as f64 * h).collect(),
        points: (0..=n).map(|k| curve(k as f64 * h)).collect(),
        alive: true,
        death_index: None,
        transports: vec![linalg::identity(2); n],
        h,
    };
    let v = Potential::matrix(
        "smooth",
        2,
        |x: &Point| {
            let y = x.coords();
            CMatrix::from_fn(2, 2, |i, j| match (i, j) {
                (0, 0) => C64::new(y[0] * y[0], 0.0),
                (1, 1) => C64::new(-y[1], 0.0),
                (0, 1) => C64::new(y[0], 2.0 * y[1]),
                _ => C64::new(y[0], -2.0 * y[1]),
            })
        },
        KatoClass::Bounded,
        KatoClass::Bounded,
        vec![],
    )
    .unwrap();
    evolve_holonomy(&m, &path, &v).unwrap().endpoint().clone()
}

#[test]
fn second_order_convergence_on_smooth_curve() {
    let h = 0.02;
    let e1 = smooth_endpoint(h);
    let e2 = smooth_endpoint(h / 2.0);
    let e4 = smooth_endpoint(h / 4.0);
    let ratio = linalg::op_norm(&(&e1 - &e2)) / linalg::op_norm(&(&e2 - &e4));
    assert!((ratio / 4.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn truncation_low_orders() {
    let (m, p) = euclidean_path(2, 0.5, 1e-3, 8);
    let c = 0.9;
    let v = Potential::scalar(ScalarField::constant(c), 2, KatoClass::Bounded, KatoClass::Bounded);
    let tr = evolve_holonomy(&m, &p, &v).unwrap();
    assert_eq!(product_integral_truncation(&tr, 0).unwrap(), linalg::identity(2));
    let one = product_integral_truncation(&tr, 1).unwrap();
    let want = linalg::identity(2) * C64::new(1.0 - c * 0.5, 0.0);
    assert!(linalg::max_abs_diff(&one, &want) < 1e-12);
    assert!(product_integral_truncation(&tr, 7).is_err());
}

#[test]
fn truncation_remainder_bound() {
    for seed in 0..5 {
        let (m, p) = sphere_path(0.5, 20 + seed);
        let v = random_field(2, 30 + seed, 1.0);
        let tr = evolve_holonomy(&m, &p, &v).unwrap();
        let l1 = tr.generator_l1();
        let trunc = product_integral_truncation(&tr, 4).unwrap();
        let err = linalg::op_norm(&(&trunc - tr.endpoint()));
        let bound = l1.powi(5) * l1.exp() / 120.0 + 5e-8;
        assert!(err <= bound, "{err} > {bound}");
        // successive orders approach the endpoint
        let e6 = linalg::op_norm(&(product_integral_truncation(&tr, 6).unwrap() - tr.endpoint()));
        assert!(e6 <= err);
    }
}

#[test]
fn truncation_guard_refuses_large_generators() {
    let (m, p) = euclidean_path(1, 1.0, 1e-3, 9);
    let v = Potential::scalar(ScalarField::constant(6.0), 1, KatoClass::Bounded, KatoClass::Bounded);
    let tr = evolve_holonomy(&m, &p, &v).unwrap();
    assert_eq!(product_integral_truncation(&tr, 3).unwrap_err().key(), Some("order"));
}

#[test]
fn zero_generator_bounds_are_tight() {
    let f = GridGenerator::zero(3, 1.0, 10);
    let checks = check_generator(&f, Some(&f), 0, 0);
    for c in &checks {
        assert!(c.holds());
    }
    let growth = checks.iter().find(|c| c.name == "norm_growth").unwrap();
    assert!((growth.lhs - 1.0).abs() < 1e-15 && (growth.rhs - 1.0).abs() < 1e-15);
    let stab = checks.iter().find(|c| c.name == "stability").unwrap();
    assert_eq!((stab.lhs, stab.rhs), (0.0, 0.0));
    let herm = check_hermitian(&f, 2, 7, 0, 0);
    assert!(herm.iter().all(|c| (c.lhs - 1.0).abs() < 1e-15 && (c.rhs - 1.0).abs() < 1e-15));
}

#[test]
fn identical_generators_have_zero_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = GridGenerator::random(&mut rng, 3, 1.0, 50, false);
    let stab = check_generator(&f, Some(&f), 0, 0).into_iter().find(|c| c.name == "stability").unwrap();
    assert_eq!(stab.lhs, 0.0);
    assert_eq!(stab.rhs, 0.0);
}

#[test]
fn inequality_suite_has_no_violations() {
    let rep = inequality_suite(200, 4, 1.0, 100, 7).unwrap();
    assert_eq!(rep.checks.len(), 200 * 8);
    let v = rep.violations();
    assert!(v.is_empty(), "{:?}", v.first());
}

proptest! {
    #[test]
    fn constant_field_respects_floor(seed in 0u64..1000, shift in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = linalg::random_hermitian(&mut rng, 2, 1.0) + linalg::identity(2) * C64::new(shift, 0.0);
        let floor = linalg::lambda_min(&w);
        let w2 = w.clone();
        let v = Potential::matrix("c", 2, move |_: &Point| w2.clone(), KatoClass::Bounded, KatoClass::Bounded, vec![]).unwrap();
        let (m, p) = euclidean_path(2, 0.3, 1e-2, seed);
        let tr = evolve_holonomy(&m, &p, &v).unwrap();
        for (k, val) in tr.values.iter().enumerate() {
            prop_assert!(linalg::op_norm(val) <= (-floor * tr.times[k]).exp() * (1.0 + 1e-12) + 1e-9);
        }
    }
}
