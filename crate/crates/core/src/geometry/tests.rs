use super::*;
use proptest::prelude::{prop_assert, proptest, ProptestConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sphere() -> Manifold {
    Manifold::sphere2(1.0).unwrap()
}

#[test]
fn euclidean_exp_is_translation() {
    let m = Manifold::euclidean(2).unwrap();
    let y = m.exp_step(&m.origin(), &[1.0, 0.0]).unwrap();
    assert_eq!(y.coords(), &[1.0, 0.0]);
}

#[test]
fn sphere_pole_to_antipode() {
    let m = sphere();
    let y = m.exp_step(&m.origin(), &[PI, 0.0]).unwrap();
    assert!((y.coords()[2] + 1.0).abs() < 1e-12);
    assert!((m.distance(&m.origin(), &y) - PI).abs() < 1e-9);
}

#[test]
fn sphere_rejects_steps_beyond_injectivity_radius() {
    let m = sphere();
    assert!(matches!(m.exp_step(&m.origin(), &[3.5, 0.0]), Err(Error::StepTooLarge { .. })));
    assert!(m.exp_step(&m.origin(), &[f64::NAN, 0.0]).is_err());
}

/// Integrate the geodesic equation of the conformal metric
/// `4|dz|²/(1-|z|²)²` with RK4 from the origin at unit speed.
fn numeric_disk_geodesic(direction: [f64; 2], time: f64) -> [f64; 2] {
    let accel = |z: [f64; 2], v: [f64; 2]| {
        let r2 = z[0] * z[0] + z[1] * z[1];
        // grad φ for φ = ln 2 − ln(1 − |z|²)
        let g = [2.0 * z[0] / (1.0 - r2), 2.0 * z[1] / (1.0 - r2)];
        let gv = g[0] * v[0] + g[1] * v[1];
        let vv = v[0] * v[0] + v[1] * v[1];
        [-2.0 * gv * v[0] + vv * g[0], -2.0 * gv * v[1] + vv * g[1]]
    };
    let mut z = [0.0, 0.0];
    let mut v = [0.5 * direction[0], 0.5 * direction[1]];
    let n = 20_000;
    let h = time / n as f64;
    for _ in 0..n {
        let k1z = v;
        let k1v = accel(z, v);
        let z2 = [z[0] + 0.5 * h * k1z[0], z[1] + 0.5 * h * k1z[1]];
        let v2 = [v[0] + 0.5 * h * k1v[0], v[1] + 0.5 * h * k1v[1]];
        let k2v = accel(z2, v2);
        let z3 = [z[0] + 0.5 * h * v2[0], z[1] + 0.5 * h * v2[1]];
        let v3 = [v[0] + 0.5 * h * k2v[0], v[1] + 0.5 * h * k2v[1]];
        let k3v = accel(z3, v3);
        let z4 = [z[0] + h * v3[0], z[1] + h * v3[1]];
        let v4 = [v[0] + h * k3v[0], v[1] + h * k3v[1]];
        let k4v = accel(z4, v4);
        for i in 0..2 {
            z[i] += h / 6.0 * (k1z[i] + 2.0 * v2[i] + 2.0 * v3[i] + v4[i]);
            v[i] += h / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    z
}

#[test]
fn disk_exp_from_origin_matches_geodesic_integration() {
    let m = Manifold::hyperbolic();
    let y = m.exp_step(&m.origin(), &[1.0, 0.0]).unwrap();
    let reference = numeric_disk_geodesic([1.0, 0.0], 1.0);
    assert!((y.coords()[0] - reference[0]).abs() < 1e-9);
    assert!((y.coords()[0] - 0.462_117_157_260_01).abs() < 1e-10);
    assert!((m.distance(&m.origin(), &y) - 1.0).abs() < 1e-12);
}

#[test]
fn disk_exp_away_from_origin_realises_distance() {
    let m = Manifold::hyperbolic();
    let x = m.point(&[0.3, -0.5]).unwrap();
    for xi in [[0.7, 0.2], [-1.5, 2.0], [0.0, 0.01]] {
        let y = m.exp_step(&x, &xi).unwrap();
        let len = norm(&xi);
        assert!((m.distance(&x, &y) - len).abs() < 1e-9 * len.max(1.0));
        let back = m.log(&x, &y);
        assert!((back[0] - xi[0]).abs() < 1e-9 && (back[1] - xi[1]).abs() < 1e-9);
    }
}

#[test]
fn exp_log_roundtrip_sphere_and_torus() {
    let s = sphere();
    let x = s.point(&[0.6, 0.0, 0.8]).unwrap();
    let y = s.exp_step(&x, &[0.4, -1.1]).unwrap();
    let v = s.log(&x, &y);
    assert!((v[0] - 0.4).abs() < 1e-12 && (v[1] + 1.1).abs() < 1e-12);
    let t = Manifold::torus(vec![1.0, 2.0]).unwrap();
    let x = t.point(&[0.9, 1.9]).unwrap();
    let y = t.exp_step(&x, &[0.3, 0.2]).unwrap();
    assert!((y.coords()[0] - 0.2).abs() < 1e-12 && (y.coords()[1] - 0.1).abs() < 1e-12);
    assert!((t.distance(&x, &y) - 0.3f64.hypot(0.2)).abs() < 1e-12);
}

/// Stepping along ξ and back along the transported −ξ returns to the start.
#[test]
fn exp_step_reversibility() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let models = [sphere(), Manifold::hyperbolic(), Manifold::euclidean(3).unwrap(), Manifold::circle(2.0).unwrap()];
    for m in &models {
        for _ in 0..50 {
            let x = random_point(m, &mut rng);
            let xi: Vec<f64> = (0..m.dim()).map(|_| 0.01 * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let y = m.exp_step(&x, &xi).unwrap();
            let tr = m.transport_frame(&x, &y);
            let back: Vec<f64> = (0..m.dim()).map(|b| -(0..m.dim()).map(|a| xi[a] * tr[a][b]).sum::<f64>()).collect();
            let z = m.exp_step(&y, &back).unwrap();
            assert!(m.distance(&x, &z) < 1e-8, "{m}: {}", m.distance(&x, &z));
        }
    }
}

#[test]
fn transport_is_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for m in [sphere(), Manifold::hyperbolic()] {
        for _ in 0..20 {
            let x = random_point(&m, &mut rng);
            let y = random_point(&m, &mut rng);
            let t = m.transport_frame(&x, &y);
            for a in 0..2 {
                for b in 0..2 {
                    let d: f64 = (0..2).map(|k| t[a][k] * t[b][k]).sum();
                    assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
                }
            }
        }
    }
}

/// Transporting around a latitude circle of colatitude θ rotates tangent
/// vectors by the enclosed solid angle 2π(1 − cos θ).
#[test]
fn sphere_holonomy_around_latitude() {
    let m = sphere();
    let theta: f64 = 0.9;
    let n = 4000;
    let pt = |k: usize| {
        let phi = 2.0 * PI * k as f64 / n as f64;
        m.point(&[theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]).unwrap()
    };
    // track a vector's frame coefficients; the latitude is not a geodesic,
    // but the piecewise-geodesic polygon converges to it
    let mut v = [1.0, 0.0];
    for k in 0..n {
        let t = m.transport_frame(&pt(k), &pt(k + 1));
        v = [v[0] * t[0][0] + v[1] * t[1][0], v[0] * t[0][1] + v[1] * t[1][1]];
    }
    let angle = v[1].atan2(v[0]);
    let expected = wrap(2.0 * PI * (1.0 - theta.cos()), 2.0 * PI);
    assert!((wrap(angle - expected, 2.0 * PI)).abs() < 1e-5, "{angle} vs {expected}");
}

fn random_point(m: &Manifold, rng: &mut ChaCha8Rng) -> Point {
    match m {
        Manifold::Hyperbolic => {
            let r = 0.9 * rng.random::<f64>();
            let a = 2.0 * PI * rng.random::<f64>();
            m.point(&[r * a.cos(), r * a.sin()]).unwrap()
        }
        Manifold::Euclidean { m: d } => {
            let c: Vec<f64> = (0..*d).map(|_| 4.0 * rng.random::<f64>() - 2.0).collect();
            m.point(&c).unwrap()
        }
        _ => m.uniform_point(rng).unwrap(),
    }
}

#[test]
fn euclidean_kernel_values() {
    let m = Manifold::euclidean(1).unwrap();
    let o = m.origin();
    assert!((m.heat_kernel(1.0, &o, &o).unwrap() - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
    let m3 = Manifold::euclidean(3).unwrap();
    assert!((m3.sup_heat_kernel(1.0).unwrap() - 0.063_493_635_934_240_97).abs() < 1e-12);
}

#[test]
fn circle_kernel_equilibrates() {
    let m = Manifold::circle(1.0).unwrap();
    let x = m.point(&[0.3]).unwrap();
    let y = m.point(&[2.9]).unwrap();
    assert!((m.heat_kernel(200.0, &x, &y).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-12);
}

#[test]
fn circle_image_and_spectral_sums_agree() {
    let l = 2.0 * PI;
    for s in [0.0, 0.4, 2.0, PI] {
        let t = 0.25 * l * l;
        let images = circle_kernel(t * (1.0 - 1e-12), s, l);
        let spectral = circle_kernel(t * (1.0 + 1e-12), s, l);
        assert!((images - spectral).abs() < 1e-12);
    }
}

#[test]
fn sphere_diagonal_small_time_asymptotics() {
    // p_t(x,x) ≈ (2πt)^{-1}(1 + t/(6R²)) as t → 0
    for (t, r) in [(1e-3, 1.0), (4e-3, 2.0)] {
        let p = sphere_kernel(t, 0.0, r);
        let asym = (1.0 + t / (6.0 * r * r)) / (2.0 * PI * t);
        assert!((p / asym - 1.0).abs() < 1e-5, "{p} {asym}");
    }
    // the image integral and the series agree where both are accurate
    for gamma in [0.0, 0.7, 2.0, 3.0, PI] {
        let a = sphere_kernel(2.0 * (1.0 - 1e-12), gamma, 1.0);
        let b = sphere_kernel(2.0 * (1.0 + 1e-12), gamma, 1.0);
        assert!((a / b - 1.0).abs() < 1e-9, "{gamma}: {a} {b}");
    }
}

/// Deep Gaussian tail, where the Legendre series has no correct digits.
/// References from an adaptive quadrature of the image integral.
#[test]
fn sphere_kernel_far_tail() {
    for (s, theta, want) in [
        (0.05, 2.9, 3.1317236329844016e-18),
        (0.01, 1.5, 3.646141720041235e-24),
        (0.09, 3.1, 2.3491251860472244e-11),
        (0.002, 0.3, 0.0005218002017902629),
    ] {
        let got = sphere_kernel(2.0 * s, theta, 1.0);
        assert!((got / want - 1.0).abs() < 1e-8, "{s} {theta}: {got} vs {want}");
    }
}

#[test]
fn sphere_kernel_equilibrium_and_value() {
    let m = sphere();
    let o = m.origin();
    assert!((m.sup_heat_kernel(60.0).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-12);
    // direct sum at t = 0.5
    let direct: f64 = (0..200).map(|l| {
        let l = l as f64;
        (2.0 * l + 1.0) * (-l * (l + 1.0) * 0.25).exp()
    }).sum::<f64>() / (4.0 * PI);
    assert!((m.heat_kernel(0.5, &o, &o).unwrap() - direct).abs() < 1e-12);
}

#[test]
fn compact_kernels_normalise() {
    let models = [
        (Manifold::circle(1.3).unwrap(), 400),
        (Manifold::torus(vec![1.0, 1.5]).unwrap(), 80),
        (sphere(), 48),
    ];
    for (m, n) in &models {
        let rule = m.volume_rule(*n).unwrap();
        let x = m.origin();
        for t in [0.05, 0.5, 3.0] {
            let mass: f64 = rule.iter().map(|(y, w)| w * m.heat_kernel(t, &x, y).unwrap()).sum();
            assert!((mass - 1.0).abs() < 1e-6, "{m} t={t}: {mass}");
        }
    }
}

#[test]
fn hyperbolic_kernel_normalises() {
    for t in [0.2f64, 1.0, 4.0] {
        let rmax = 12.0 * t.sqrt() + t;
        let mass = crate::quad::tanh_sinh(
            |r: f64| hyperbolic_kernel(t, r).unwrap() * 2.0 * PI * r.sinh(),
            0.0,
            rmax,
            1e-12,
        );
        assert!((mass - 1.0).abs() < 1e-6, "t={t}: {mass}");
    }
    // at small times the kernel looks Euclidean
    let t = 1e-3;
    let p = hyperbolic_kernel(t, 0.0).unwrap();
    assert!((p * 2.0 * PI * t - 1.0).abs() < 1e-3);
}

#[test]
fn chapman_kolmogorov_on_compact_models() {
    for (m, n) in [(Manifold::circle(1.0).unwrap(), 400), (sphere(), 40)] {
        let rule = m.volume_rule(n).unwrap();
        let x = m.origin();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = m.uniform_point(&mut rng).unwrap();
        for (s, t) in [(0.3, 0.5), (1.0, 0.25)] {
            let lhs: f64 = rule
                .iter()
                .map(|(z, w)| w * m.heat_kernel(s, &x, z).unwrap() * m.heat_kernel(t, z, &y).unwrap())
                .sum();
            let rhs = m.heat_kernel(s + t, &x, &y).unwrap();
            assert!((lhs - rhs).abs() < 1e-6, "{m}: {lhs} {rhs}");
        }
    }
}

#[test]
fn sup_kernel_nonincreasing_in_t() {
    for m in [sphere(), Manifold::hyperbolic(), Manifold::circle(1.0).unwrap(), Manifold::euclidean(2).unwrap()] {
        let mut prev = f64::INFINITY;
        for k in 0..30 {
            let t = 0.01 * 1.3f64.powi(k);
            let c = m.sup_heat_kernel(t).unwrap();
            assert!(c <= prev * (1.0 + 1e-12), "{m} at t={t}");
            prev = c;
        }
    }
}

#[test]
fn subdomain_kernel_is_refused() {
    let b = Manifold::ball(Manifold::euclidean(2).unwrap(), Point::intrinsic(&[0.0, 0.0]), 1.0).unwrap();
    let o = b.origin();
    assert!(matches!(b.heat_kernel(1.0, &o, &o), Err(Error::NoClosedForm { .. })));
    assert!(b.contains(&o));
    assert!(!b.contains(&Point::intrinsic(&[1.0, 0.5])));
}

/// `C_s ≤ c_t s^{-1/2}` in one dimension with `c_t = (2π)^{-1/2}`.
#[test]
fn euclidean_line_sup_kernel_power_law() {
    let m = Manifold::euclidean(1).unwrap();
    for k in 1..=40 {
        let s = k as f64 / 40.0;
        assert!(m.sup_heat_kernel(s).unwrap() <= (2.0 * PI).powf(-0.5) / s.sqrt() * (1.0 + 1e-14));
    }
}

/// Gaussian upper bound `p_s(x,y) ≤ c_t e^{-d_t d²/s} s^{-m/2}` for
/// `0 < s ≤ t`: constants fitted on a coarse grid, verified on a finer one.
#[test]
fn gaussian_upper_bound_fit() {
    let t = 1.0;
    let d_t = 0.25;
    for m in [sphere(), Manifold::hyperbolic()] {
        let o = m.origin();
        let dist_max = if m.is_compact() { PI } else { 6.0 };
        let ratio = |s: f64, r: f64| {
            let y = m.exp_step(&o, &[r, 0.0]).unwrap();
            // log space: the kernel underflows long before the Gaussian weight overflows
            let p = m.heat_kernel(s, &o, &y).unwrap();
            if p == 0.0 {
                0.0
            } else {
                (p.ln() + s.ln() + d_t * r * r / s).exp()
            }
        };
        let mut c_t: f64 = 0.0;
        for i in 0..=12 {
            for j in 0..=10 {
                c_t = c_t.max(ratio(t * 0.5f64.powi(i), dist_max * j as f64 / 10.0));
            }
        }
        let c_t = 1.5 * c_t;
        for i in 0..=37 {
            for j in 0..=41 {
                let s = t * 0.5f64.powf(12.0 * i as f64 / 37.0);
                let r = dist_max * j as f64 / 41.0;
                assert!(ratio(s, r) <= c_t, "{m}: s={s} r={r}");
            }
        }
    }
}

#[test]
fn point_validation() {
    let s = sphere();
    assert!(s.point(&[0.0, 0.0, 2.0]).is_err());
    assert!(Manifold::hyperbolic().point(&[0.8, 0.8]).is_err());
    let c = Manifold::circle(1.0).unwrap();
    assert!((c.point(&[-0.5]).unwrap().coords()[0] - (2.0 * PI - 0.5)).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_symmetric_and_triangle(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in [sphere(), Manifold::hyperbolic(), Manifold::torus(vec![1.0, 0.7]).unwrap(), Manifold::euclidean(3).unwrap()] {
            let x = random_point(&m, &mut rng);
            let y = random_point(&m, &mut rng);
            let z = random_point(&m, &mut rng);
            prop_assert!((m.distance(&x, &y) - m.distance(&y, &x)).abs() < 1e-9);
            prop_assert!(m.distance(&x, &z) <= m.distance(&x, &y) + m.distance(&y, &z) + 1e-9);
        }
    }

    #[test]
    fn kernels_symmetric(seed in 0u64..10_000, t in 0.01f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in [sphere(), Manifold::hyperbolic(), Manifold::torus(vec![1.0, 0.7]).unwrap(), Manifold::circle(0.5).unwrap()] {
            let x = random_point(&m, &mut rng);
            let y = random_point(&m, &mut rng);
            let a = m.heat_kernel(t, &x, &y).unwrap();
            let b = m.heat_kernel(t, &y, &x).unwrap();
            prop_assert!((a - b).abs() < 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn exp_step_realises_distance(seed in 0u64..10_000, len in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for m in [sphere(), Manifold::hyperbolic()] {
            let x = random_point(&m, &mut rng);
            let a = 2.0 * PI * rng.random::<f64>();
            let y = m.exp_step(&x, &[len * a.cos(), len * a.sin()]).unwrap();
            prop_assert!((m.distance(&x, &y) - len).abs() < 1e-9);
        }
    }
}

#[test]
fn absolute_accuracy_sphere_kernel_matches() {
    for t in [0.12, 0.3, 1.0, 1.9] {
        let peak = sphere_kernel(t, 0.0, 1.0);
        for gamma in [0.0, 0.4, 1.5, 3.0, PI] {
            let d = (sphere_kernel_abs(t, gamma, 1.0) - sphere_kernel(t, gamma, 1.0)).abs();
            assert!(d < 1e-11 * peak, "t={t} gamma={gamma}: {d}");
        }
    }
}
