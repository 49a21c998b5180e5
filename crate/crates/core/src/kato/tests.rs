use super::*;
use crate::field::{coulomb, inverse_power, well};

fn r3() -> Manifold {
    Manifold::euclidean(3).unwrap()
}

fn at(m: &Manifold, c: &[f64]) -> Point {
    m.point(c).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

#[test]
fn i0e_values() {
    assert!(rel(i0e(1.0), 0.46575960759364043) < 1e-14);
    assert!(rel(i0e(10.0), 0.1278333371634286) < 1e-14);
    assert!(rel(i0e(49.9), 0.05661856278192253) < 1e-13);
    assert!(rel(i0e(60.0), 0.05161154917360984) < 1e-13);
    assert_eq!(i0e(0.0), 1.0);
}

#[test]
fn constant_field_gives_t() {
    let one = ScalarField::constant(1.0);
    for model in [
        Manifold::euclidean(1).unwrap(),
        Manifold::euclidean(2).unwrap(),
        r3(),
        Manifold::sphere2(1.0).unwrap(),
        Manifold::hyperbolic(),
    ] {
        for t in [0.01, 0.5] {
            let k = kato_integral(&model, &one, t, &model.origin()).unwrap();
            assert!(rel(k.value, t) < 1e-6, "{model:?} t={t}: {}", k.value);
            assert!(k.converged());
        }
    }
}

#[test]
fn coulomb_at_center_r3() {
    let m = r3();
    let v = coulomb(0.5, m.origin());
    for t in [1e-3, 0.25, 2.0] {
        let k = kato_integral(&m, &v, t, &m.origin()).unwrap();
        let exact = 0.5 * 2.0 * (2.0 * t / PI).sqrt();
        assert!(rel(k.value, exact) < 1e-8, "t={t}: {} vs {exact}", k.value);
    }
}

#[test]
fn coulomb_off_center_r3() {
    let m = r3();
    let v = coulomb(1.0, m.origin());
    // ∫_0^t erf(ρ/√(2s))/ρ ds
    for (rho, t, exact) in [(0.7, 0.25, 0.3361276718272003), (0.3, 1.0, 1.3195986321607702)] {
        let k = kato_integral(&m, &v, t, &at(&m, &[0.0, rho, 0.0])).unwrap();
        assert!(rel(k.value, exact) < 1e-8, "rho={rho}: {} vs {exact}", k.value);
    }
}

#[test]
fn coulomb_at_center_r2() {
    let m = Manifold::euclidean(2).unwrap();
    let v = coulomb(1.0, m.origin());
    let t = 0.3;
    let k = kato_integral(&m, &v, t, &m.origin()).unwrap();
    // E[1/|B_s|] = √(π/2s)
    assert!(rel(k.value, (2.0 * PI * t).sqrt()) < 1e-8);
}

#[test]
fn inverse_sqrt_r1() {
    let m = Manifold::euclidean(1).unwrap();
    let v = inverse_power(1.0, 0.5, m.origin());
    // mpmath with y = ±u² near the singularity
    let k = kato_integral(&m, &v, 0.5, &at(&m, &[0.4])).unwrap();
    assert!(rel(k.value, 1.0121029869654144) < 1e-8, "{}", k.value);
}

#[test]
fn polar_and_radial_routes_agree() {
    for dim in [1usize, 2, 3] {
        let m = Manifold::euclidean(dim).unwrap();
        let radial = coulomb(1.0, m.origin()).map("c", |v| v.min(20.0));
        let plain = ScalarField::new("c", |y: &Point| {
            (1.0 / y.coords().iter().map(|c| c * c).sum::<f64>().sqrt()).min(20.0)
        })
        .with_singular(vec![m.origin()]);
        let mut x = vec![0.0; dim];
        x[0] = 0.35;
        let x = at(&m, &x);
        let a = kato_integral(&m, &radial, 0.2, &x).unwrap().value;
        let b = kato_integral(&m, &plain, 0.2, &x).unwrap().value;
        assert!(rel(b, a) < 2e-3, "m={dim}: polar {b} radial {a}");
    }
}

#[test]
fn well_on_ball_subdomain_is_bounded_by_base() {
    let base = r3();
    let ball = Manifold::ball(base.clone(), base.origin(), 1.0).unwrap();
    let v = well(2.0, 0.5, base.origin());
    let inside = kato_integral(&ball, &v, 0.5, &base.origin()).unwrap().value;
    let full = kato_integral(&base, &v, 0.5, &base.origin()).unwrap().value;
    assert!(inside > 0.0 && inside <= full * (1.0 + 1e-3), "{inside} {full}");
}

#[test]
fn coulomb_decays_like_sqrt_t() {
    let m = r3();
    let v = coulomb(1.0, m.origin());
    let grid = [m.origin(), at(&m, &[0.1, 0.0, 0.0]), at(&m, &[0.5, 0.5, 0.0])];
    let rep = kato_report(&m, &v, &[1.0, 0.1, 0.01, 1e-3, 1e-4], &grid).unwrap();
    assert_eq!(rep.verdict, Verdict::KatoConsistent);
    let a = rep.fitted_decay_exponent.unwrap();
    assert!((a - 0.5).abs() < 0.1, "{a}");
    assert!(rep.argmax.iter().all(|&i| i == 0));
}

#[test]
fn inverse_square_fails_decay() {
    let m = r3();
    let v = inverse_power(1.0, 2.0, m.origin());
    let rep = kato_report(&m, &v, &[1.0, 0.1, 0.01], &[m.origin()]).unwrap();
    assert_eq!(rep.verdict, Verdict::FailsDecay);
    assert!(rep.sup_integral.iter().all(|v| v.is_infinite()));
}

#[test]
fn lp_threshold() {
    let m = r3();
    let v = coulomb(1.0, m.origin()).map("c", |v| v.min(50.0));
    let r = lp_inclusion_check(&m, &v, 2.0, &[1.0, 0.01], &[m.origin()]).unwrap();
    assert!(r.above_threshold);
    let r = lp_inclusion_check(&m, &v, 1.5, &[1.0, 0.01], &[m.origin()]).unwrap();
    assert!(!r.above_threshold);
    assert!(lp_inclusion_check(&m, &v, 0.5, &[1.0, 0.01], &[m.origin()]).is_err());
}

#[test]
fn bad_grids_rejected() {
    let m = r3();
    let v = ScalarField::constant(1.0);
    assert!(kato_report(&m, &v, &[0.1, 1.0], &[m.origin()]).is_err());
    assert!(kato_report(&m, &v, &[1.0], &[m.origin()]).is_err());
    assert!(kato_sup_integral(&m, &v, 1.0, &[]).is_err());
    assert!(kato_integral(&m, &v, -1.0, &m.origin()).is_err());
}

#[test]
fn khasminskii_for_small_coulomb() {
    let m = r3();
    let v = coulomb(0.5, m.origin());
    let grid = [m.origin(), at(&m, &[0.3, 0.0, 0.0])];
    let c = khasminskii_constants(&m, &v, &grid, 0.25).unwrap();
    assert_eq!(c.t0, 0.25);
    assert!(rel(c.c_t0, 0.5 * 2.0 * (0.5 / PI).sqrt()) < 1e-8);
    // large coupling forces bisection below t_max
    let big = coulomb(3.0, m.origin());
    let c = khasminskii_constants(&m, &big, &grid, 1.0).unwrap();
    assert!(c.t0 < 1.0 && c.c_t0 < KHASMINSKII_TARGET && c.c_t0 > 0.4, "{c:?}");
    assert!(c.cv > 0.0);
    // not Kato: no admissible t0
    let bad = inverse_power(1.0, 2.0, m.origin());
    assert!(khasminskii_constants(&m, &bad, &grid, 1.0).is_err());
}

#[test]
fn khasminskii_moment_bound_holds() {
    let m = r3();
    let v = coulomb(0.5, m.origin());
    let grid = [m.origin(), at(&m, &[0.2, 0.1, 0.0])];
    let c = khasminskii_constants(&m, &v, &grid, 0.25).unwrap();
    let checks = khasminskii_empirical(&m, &v, &c, &grid, &[0.1, 0.25], 1e-3, 2000, 7, 2).unwrap();
    assert_eq!(checks.len(), 4);
    for ch in &checks {
        assert!(ch.holds(), "{ch:?}");
        assert!(ch.mean > 1.0);
    }
}

#[test]
fn constant_field_on_subdomain_is_at_most_t() {
    let base = r3();
    let ball = Manifold::ball(base.clone(), base.origin(), 0.5).unwrap();
    let k = kato_integral(&ball, &ScalarField::constant(1.0), 0.2, &base.origin()).unwrap();
    assert!(k.value < 0.2 && k.value > 0.0);
}

#[test]
fn zero_field_khasminskii() {
    let m = r3();
    let c = khasminskii_constants(&m, &ScalarField::zero(), &[m.origin()], 1.0).unwrap();
    assert_eq!((c.cv, c.prefactor), (0.0, 2.0));
    let checks = khasminskii_empirical(&m, &ScalarField::zero(), &c, &[m.origin()], &[0.5], 1e-2, 100, 1, 1).unwrap();
    assert_eq!(checks[0].mean, 1.0);
    assert!(checks[0].holds());
}
