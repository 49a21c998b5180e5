use super::*;
use proptest::prelude::*;

fn e3() -> Manifold {
    Manifold::euclidean(3).unwrap()
}

#[test]
fn manifolds() {
    assert!(matches!(parse_manifold("euclidean(m=3)").unwrap(), Manifold::Euclidean { m: 3 }));
    assert!(matches!(parse_manifold("euclidean(2)").unwrap(), Manifold::Euclidean { m: 2 }));
    assert!(matches!(parse_manifold("circle(r=2)").unwrap(), Manifold::Circle { radius } if radius == 2.0));
    assert!(matches!(parse_manifold("circle").unwrap(), Manifold::Circle { radius } if radius == 1.0));
    assert!(matches!(parse_manifold("sphere2").unwrap(), Manifold::Sphere2 { .. }));
    assert!(matches!(parse_manifold("hyperbolic").unwrap(), Manifold::Hyperbolic));
    match parse_manifold("torus(L=[1, 2.5])").unwrap() {
        Manifold::FlatTorus { periods } => assert_eq!(periods, vec![1.0, 2.5]),
        other => panic!("{other}"),
    }
    let b = parse_manifold("ball(euclidean(3), r=2, center=[1,0,0])").unwrap();
    assert!(b.contains(&b.point(&[2.5, 0.0, 0.0]).unwrap()));
    assert!(!b.contains(&b.point(&[-1.5, 0.0, 0.0]).unwrap()));
    let h = parse_manifold("halfspace(euclidean(2), normal=[0,1], offset=0)").unwrap();
    assert!(!h.is_complete());
}

#[test]
fn manifold_errors_name_key() {
    for s in ["euclid(3)", "euclidean(m=0)", "circle(r=-1)", "euclidean(3", "ball(circle, r=1, bogus=2)"] {
        let e = parse_manifold(s).unwrap_err();
        assert_eq!(e.key(), Some("manifold"), "{s}: {e}");
    }
}

#[test]
fn points_and_grids() {
    let m = e3();
    let p = parse_point(&m, "x", "[1, -2, 0.5]").unwrap();
    assert_eq!(p.coords(), &[1.0, -2.0, 0.5]);
    assert_eq!(parse_point(&m, "x", "[1, 2]").unwrap_err().key(), Some("x"));
    let c = Manifold::circle(1.0).unwrap();
    assert_eq!(parse_point(&c, "x", "0.25").unwrap().coords(), &[0.25]);
    let seg = parse_points(&m, "x-grid", "segment([-1,0,0], [1,0,0], 5)").unwrap();
    assert_eq!(seg.len(), 5);
    assert!((seg[1].coords()[0] + 0.5).abs() < 1e-15);
    let pts = parse_points(&m, "x-grid", "[[0,0,0],[1,1,1]]").unwrap();
    assert_eq!(pts.len(), 2);
    let on_circle = parse_points(&c, "x-grid", "[0, 1, 2]").unwrap();
    assert_eq!(on_circle.len(), 3);
    assert_eq!(parse_times("t-grid", "[0.5, 1, 2]").unwrap(), vec![0.5, 1.0, 2.0]);
    assert_eq!(parse_times("t-grid", "linspace(0, 1, 3)").unwrap(), vec![0.0, 0.5, 1.0]);
    let g = parse_times("t-grid", "geomspace(1, 100, 3)").unwrap();
    assert!((g[1] - 10.0).abs() < 1e-12);
    assert_eq!(parse_times("t-grid", "geomspace(0, 1, 3)").unwrap_err().key(), Some("t-grid"));
}

#[test]
fn scalar_potential_values_and_classes() {
    let m = e3();
    let v = parse_potential(&m, 1, "-coulomb(2) + harmonic(1)").unwrap();
    let y = m.point(&[0.0, 2.0, 0.0]).unwrap();
    // -2/2 + 4/2
    assert!((v.value(&y)[(0, 0)].re - 1.0).abs() < 1e-14);
    assert_eq!(v.negative_class(), KatoClass::Kato);
    assert_eq!(v.positive_class(), KatoClass::LocallyKato);
    assert!(v.is_singular());

    let w = parse_potential(&m, 1, "3 * well(2, 1) - 0.5").unwrap();
    assert!((w.value(&m.origin())[(0, 0)].re + 6.5).abs() < 1e-14);
    assert_eq!(w.negative_class(), KatoClass::Bounded);

    let hard = parse_potential(&m, 1, "-invpow(1, 2.5)").unwrap();
    assert_eq!(hard.negative_class(), KatoClass::LocallyIntegrable);
    let soft = parse_potential(&m, 1, "-invpow(1, 1.5, center=[1,0,0])").unwrap();
    assert_eq!(soft.negative_class(), KatoClass::Kato);

    let nested = parse_potential(&m, 1, "2*(constant(1) - harmonic(2))").unwrap();
    assert!((nested.value(&y)[(0, 0)].re - (2.0 - 16.0)).abs() < 1e-12);

    let z = parse_potential(&m, 2, "0").unwrap();
    assert_eq!(z.rank(), 2);
}

#[test]
fn power_classes_depend_on_dimension() {
    let line = Manifold::euclidean(1).unwrap();
    assert_eq!(parse_potential(&line, 1, "-coulomb(1)").unwrap().negative_class(), KatoClass::LocallyIntegrable);
    assert_eq!(parse_potential(&line, 1, "-invpow(1, 0.5)").unwrap().negative_class(), KatoClass::Kato);
}

#[test]
fn matrix_potential() {
    let m = e3();
    let v = parse_potential(&m, 2, "harmonic(1)*[[1, 0.5-0.5i],[0.5+0.5i, -1]] + 2*I").unwrap();
    let y = m.point(&[1.0, 0.0, 0.0]).unwrap();
    let a = v.value(&y);
    assert!((a[(0, 0)].re - 2.5).abs() < 1e-14);
    assert!((a[(1, 1)].re - 1.5).abs() < 1e-14);
    assert!((a[(0, 1)] - C64::new(0.25, -0.25)).norm() < 1e-14);
    // indefinite matrix times an unbounded field: both parts unbounded
    assert_eq!(v.negative_class(), KatoClass::LocallyKato);
    assert_eq!(v.positive_class(), KatoClass::LocallyKato);
    assert_eq!(parse_potential(&m, 3, "[[1,0],[0,1]]").unwrap_err().key(), Some("bundle-rank"));
    assert_eq!(parse_potential(&m, 2, "[[1,1i],[1i,1]]").unwrap_err().key(), Some("potential"));
}

#[test]
fn singular_builders_need_flat_space() {
    let s = Manifold::sphere2(1.0).unwrap();
    assert_eq!(parse_potential(&s, 1, "coulomb(1)").unwrap_err().key(), Some("potential"));
    let v = parse_potential(&s, 1, "coord(2) + 1").unwrap();
    assert_eq!(v.positive_class(), KatoClass::Bounded);
    let n = s.point(&[0.0, 0.0, 1.0]).unwrap();
    assert!((v.value(&n)[(0, 0)].re - 2.0).abs() < 1e-14);
}

#[test]
fn one_forms() {
    let c = Manifold::circle(2.0).unwrap();
    let b = parse_beta(&c, "flux(0.3)").unwrap();
    assert!((b.eval(&c.origin())[0] - 0.15).abs() < 1e-15);
    let plane = Manifold::euclidean(2).unwrap();
    let a = parse_beta(&plane, "area(2)").unwrap();
    let y = plane.point(&[1.0, 0.0]).unwrap();
    let v = a.eval(&y);
    assert!(v[0].is_finite() && v[1].is_finite());
    assert!(parse_beta(&plane, "zero").is_ok());
    assert!(parse_beta(&plane, "constant([1, 2])").is_ok());
    assert_eq!(parse_beta(&plane, "constant([1])").unwrap_err().key(), Some("beta"));
    assert_eq!(parse_beta(&e3(), "flux(1)").unwrap_err().key(), Some("beta"));
}

#[test]
fn sections() {
    let m = e3();
    let g = parse_section(&m, 1, "gaussian(0.5, center=[1,0,0])").unwrap();
    let at = m.point(&[1.0, 0.0, 0.0]).unwrap();
    assert!((g.eval(&at)[0].re - 0.5).abs() < 1e-14);
    assert_eq!(g.sup_norm(), Some(0.5));
    let g2 = parse_section(&m, 2, "ground").unwrap();
    assert_eq!(g2.rank(), 2);
    let v = g2.eval(&m.origin());
    let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
    assert!((n - parse_section(&m, 1, "ground").unwrap().eval(&m.origin())[0].norm()).abs() < 1e-14);
    let k = parse_section(&m, 2, "constant([1, 1i])").unwrap();
    assert_eq!(k.eval(&at)[1], C64::new(0.0, 1.0));
    assert!((k.sup_norm().unwrap() - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(parse_section(&m, 3, "constant([1, 2])").unwrap_err().key(), Some("f"));
    let c = Manifold::circle(1.0).unwrap();
    let md = parse_section(&c, 1, "mode(2)").unwrap();
    let p = c.point(&[std::f64::consts::FRAC_PI_4]).unwrap();
    assert!((md.eval(&p)[0] - C64::new(0.0, 1.0)).norm() < 1e-14);
}

#[test]
fn numbers() {
    let m = e3();
    let v = parse_potential(&m, 1, "1.5e-1*constant(2E1) + pi").unwrap();
    assert!((v.value(&m.origin())[(0, 0)].re - (3.0 + std::f64::consts::PI)).abs() < 1e-14);
    assert!(parse_potential(&m, 1, "1.2.3").is_err());
    assert!(parse_potential(&m, 1, "coulomb(1) $").is_err());
}

proptest! {
    #[test]
    fn constant_sums_evaluate(a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0) {
        let m = Manifold::euclidean(2).unwrap();
        let s = format!("{a:?}*constant({b:?}) - ({c:?})*constant(1)");
        let v = parse_potential(&m, 1, &s).unwrap();
        let got = v.value(&m.origin())[(0, 0)].re;
        prop_assert!((got - (a * b - c)).abs() <= 1e-12 * (1.0 + (a * b).abs() + c.abs()));
    }

    #[test]
    fn linspace_endpoints(lo in -5.0f64..5.0, span in 0.1f64..5.0, n in 2usize..40) {
        let hi = lo + span;
        let v = parse_times("t-grid", &format!("linspace({lo:?}, {hi:?}, {n})")).unwrap();
        prop_assert_eq!(v.len(), n);
        prop_assert_eq!(v[0], lo);
        prop_assert!((v[n - 1] - hi).abs() < 1e-12);
        prop_assert!(v.windows(2).all(|w| w[1] > w[0]));
    }
}
