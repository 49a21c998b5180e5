use super::*;
use crate::field::{coulomb, OneForm};
use crate::linalg;
use std::f64::consts::PI;

fn key(i: u64) -> RngKey {
    RngKey::new(2024, i)
}

#[test]
fn zero_time_path_is_a_point() {
    let m = Manifold::euclidean(2).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 0.0, 1e-3, key(0)).unwrap();
    assert_eq!(p.points.len(), 1);
    assert!(p.alive && p.transports.is_empty());
}

#[test]
fn trivial_bundle_transports_are_exactly_one() {
    let m = Manifold::euclidean(1).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 1.0, 1e-2, key(1)).unwrap();
    assert_eq!(p.transports.len(), 100);
    assert!(p.transports.iter().all(|t| t[(0, 0)] == C64::new(1.0, 0.0)));
    assert_eq!(p.duration(), 1.0);
}

#[test]
fn last_step_is_shortened() {
    let m = Manifold::euclidean(1).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 0.105, 0.01, key(1)).unwrap();
    assert_eq!(p.points.len(), 12);
    assert!((p.times[11] - p.times[10] - 0.005).abs() < 1e-12);
}

#[test]
fn rejects_oversized_steps_and_outside_starts() {
    let m = Manifold::euclidean(1).unwrap();
    let b = Bundle::trivial(1).unwrap();
    assert!(sample_path(&m, &b, &m.origin(), 1.0, 0.5, key(1)).is_err());
    let ball = Manifold::ball(m.clone(), m.origin(), 1.0).unwrap();
    let outside = Point::intrinsic(&[2.0]);
    let err = sample_path(&ball, &b, &outside, 1.0, 1e-3, key(1)).unwrap_err();
    assert_eq!(err.key(), Some("x"));
}

#[test]
fn reproducible_paths() {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::levi_civita(&m).unwrap();
    let x = m.point(&[0.0, 0.6, 0.8]).unwrap();
    let p = sample_path(&m, &b, &x, 0.3, 1e-3, key(9)).unwrap();
    let q = sample_path(&m, &b, &x, 0.3, 1e-3, key(9)).unwrap();
    assert_eq!(p.points, q.points);
    assert_eq!(p.transports, q.transports);
    let r = sample_path(&m, &b, &x, 0.3, 1e-3, key(10)).unwrap();
    assert_ne!(p.points, r.points);
}

#[test]
fn transports_are_unitary() {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::levi_civita(&m).unwrap();
    let p = sample_path(&m, &b, &m.point(&[1.0, 0.0, 0.0]).unwrap(), 1.0, 1e-3, key(3)).unwrap();
    for t in &p.transports {
        assert!(linalg::unitarity_defect(t) < 1e-10);
    }
    let total = p.accumulated_transports().pop().unwrap();
    assert!(linalg::unitarity_defect(&total) < p.transports.len() as f64 * 1e-10);
    let h = Manifold::hyperbolic();
    let bh = Bundle::levi_civita(&h).unwrap();
    let p = sample_path(&h, &bh, &h.origin(), 1.0, 1e-3, key(4)).unwrap();
    assert!(p.transports.iter().all(|t| linalg::unitarity_defect(t) < 1e-10));
}

#[test]
fn steps_respect_step_bound_statistically() {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 2.0, 1e-3, key(5)).unwrap();
    for w in p.points.windows(2) {
        assert!(m.distance(&w[0], &w[1]) <= m.max_step());
    }
}

#[test]
fn brownian_variance_identity() {
    // E|B_t − x|² = m t
    let m = Manifold::euclidean(2).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let t = 1.0;
    let stops = [t];
    let mom = montecarlo::reduce(100_000, 1, || Moments::new(1), |i, acc| {
        let mut w = Walker::new(&m, &b, m.origin(), 0.01, &stops, RngKey::new(77, i as u64));
        while w.next_step()?.is_some() {}
        let c = w.point().coords();
        acc.push(&[c[0] * c[0] + c[1] * c[1]]);
        Ok(())
    })
    .unwrap();
    assert!((mom.mean()[0] - 2.0 * t).abs() < 3.0 * mom.stderr(0), "{} ± {}", mom.mean()[0], mom.stderr(0));
}

/// Kolmogorov–Smirnov test of the geodesic distance at time t against the
/// sphere heat kernel.
#[test]
fn occupation_matches_sphere_kernel() {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let t = 0.5;
    let h = 1e-3 * t;
    let n = 100_000;
    let stops = [t];
    let x = m.origin();
    let mut dists: Vec<f64> = (0..n)
        .map(|i| {
            let mut w = Walker::new(&m, &b, x, h, &stops, RngKey::new(5, i as u64));
            while w.next_step().unwrap().is_some() {}
            m.distance(&x, w.point())
        })
        .collect();
    dists.sort_by(f64::total_cmp);
    // CDF of the distance: ∫_0^ρ p_t(γ) 2π sin γ dγ on a fine table
    let grid = 4000;
    let dens = |g: f64| crate::geometry::sphere_kernel(t, g, 1.0) * 2.0 * PI * g.sin();
    let mut cdf = vec![0.0; grid + 1];
    for k in 0..grid {
        let a = PI * k as f64 / grid as f64;
        let bnd = PI * (k + 1) as f64 / grid as f64;
        cdf[k + 1] = cdf[k] + crate::quad::gauss_legendre(6, a, bnd).iter().map(|(g, w)| w * dens(*g)).sum::<f64>();
    }
    assert!((cdf[grid] - 1.0).abs() < 1e-9);
    let f = |r: f64| {
        let s = r / PI * grid as f64;
        let k = (s.floor() as usize).min(grid - 1);
        cdf[k] + (s - k as f64) * (cdf[k + 1] - cdf[k])
    };
    let mut d_max: f64 = 0.0;
    for (i, r) in dists.iter().enumerate() {
        let fr = f(*r);
        d_max = d_max.max((fr - i as f64 / n as f64).abs()).max(((i + 1) as f64 / n as f64 - fr).abs());
    }
    // p-value > 0.001 ⇔ √n·D < 1.949
    assert!(d_max * (n as f64).sqrt() < 1.949, "KS statistic {}", d_max * (n as f64).sqrt());
}

#[test]
fn scalar_integral_trivial_cases() {
    let m = Manifold::euclidean(2).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 0.7, 1e-3, key(2)).unwrap();
    assert_eq!(integrate_scalar_along(&m, &p, &ScalarField::zero()).unwrap(), 0.0);
    let c = integrate_scalar_along(&m, &p, &ScalarField::constant(2.5)).unwrap();
    assert!((c - 2.5 * 0.7).abs() < 1e-12);
}

#[test]
fn nan_potential_reports_step() {
    let m = Manifold::euclidean(1).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 0.1, 1e-3, key(2)).unwrap();
    let v = ScalarField::new("bad", |x: &Point| if x.coords()[0] > 0.0 { f64::NAN } else { 0.0 });
    assert!(matches!(integrate_scalar_along(&m, &p, &v), Err(Error::NonFinite { .. })));
}

/// E ∫_0^t |B_s|^{-1} ds from x = (1,0,0): E|x + W_s|^{-1} = erf(1/√(2s)).
#[test]
fn coulomb_integral_matches_quadrature() {
    let m = Manifold::euclidean(3).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let v = coulomb(1.0, Point::intrinsic(&[0.0, 0.0, 0.0]));
    let x = Point::intrinsic(&[1.0, 0.0, 0.0]);
    let t = 0.25;
    let h = 1e-3 * t;
    let mom = montecarlo::reduce(20_000, 1, || Moments::new(1), |i, acc| {
        let p = sample_path(&m, &b, &x, t, h, RngKey::new(31, i as u64))?;
        acc.push(&[integrate_scalar_along(&m, &p, &v)?]);
        Ok(())
    })
    .unwrap();
    let reference = crate::quad::tanh_sinh(|s: f64| erf(1.0 / (2.0 * s).sqrt()), 0.0, t, 1e-12);
    assert!((mom.mean()[0] - reference).abs() < 3.0 * mom.stderr(0), "{} ± {} vs {reference}", mom.mean()[0], mom.stderr(0));
}

fn erf(x: f64) -> f64 {
    // erf via the incomplete gamma series / continued fraction is overkill here;
    // integrate the Gaussian directly.
    2.0 / PI.sqrt() * crate::quad::tanh_sinh(|u: f64| (-u * u).exp(), 0.0, x, 1e-14)
}

#[test]
fn line_integral_of_closed_loop_on_circle() {
    let m = Manifold::circle(1.0).unwrap();
    let a = 0.37;
    let beta = OneForm::constant(&[a]);
    let n = 1000;
    let points: Vec<Point> = (0..=n).map(|k| m.point(&[2.0 * PI * k as f64 / n as f64]).unwrap()).collect();
    let path = PathSample {
        times: (0..=n).map(|k| k as f64 / n as f64).collect(),
        points,
        alive: true,
        death_index: None,
        transports: vec![linalg::identity(1); n],
        h: 1.0 / n as f64,
    };
    let s = stratonovich_line_integral(&m, &path, &beta).unwrap();
    assert!((s - 2.0 * PI * a).abs() < 1e-10);
    assert_eq!(stratonovich_line_integral(&m, &path, &OneForm::zero()).unwrap(), 0.0);
}

/// E[e^{iλA_t}] = 1/cosh(λt/2) for Lévy's area.
#[test]
fn levy_area_characteristic_function() {
    let m = Manifold::euclidean(2).unwrap();
    let beta = OneForm::area(1.0);
    let b = Bundle::magnetic(beta.clone());
    let t = 1.0;
    let stops = [t];
    let mom = montecarlo::reduce(100_000, 1, || Moments::new(2), |i, acc| {
        let mut w = Walker::new(&m, &b, m.origin(), 1e-3, &stops, RngKey::new(8, i as u64));
        let mut area = 0.0;
        while let Some(step) = w.next_step()? {
            if let StepTransport::Phase(th) = step.transport {
                area += th;
            }
        }
        acc.push(&[area.cos(), area.sin()]);
        Ok(())
    })
    .unwrap();
    let exact = 1.0 / (0.5 * t).cosh();
    assert!((mom.mean()[0] - exact).abs() < 3.0 * mom.stderr(0), "{} ± {}", mom.mean()[0], mom.stderr(0));
    assert!(mom.mean()[1].abs() < 3.0 * mom.stderr(1) + 1e-12);
}

#[test]
fn magnetic_phases_equal_line_integral() {
    let m = Manifold::euclidean(2).unwrap();
    let beta = OneForm::area(0.7);
    let b = Bundle::magnetic(beta.clone());
    let p = sample_path(&m, &b, &m.origin(), 0.5, 1e-3, key(12)).unwrap();
    let total: f64 = p.transports.iter().map(|t| t[(0, 0)].arg()).sum();
    let direct = stratonovich_line_integral(&m, &p, &beta).unwrap();
    assert!((total - direct).abs() < 1e-12);
}

#[test]
fn exit_short_time_survival() {
    let m = Manifold::euclidean(2).unwrap();
    let starts = [m.origin(), Point::intrinsic(&[0.5, 0.0])];
    let rep = exit_probability(&m, &starts, &m.origin(), 1.0, &[1e-4], 1e-6, 2000, 3, 1).unwrap();
    assert!(rep.inf[0] >= 0.999);
}

#[test]
fn exit_rejects_start_outside_ball() {
    let m = Manifold::euclidean(1).unwrap();
    let err = exit_probability(&m, &[Point::intrinsic(&[1.5])], &m.origin(), 1.0, &[1.0], 1e-3, 10, 0, 1).unwrap_err();
    assert_eq!(err.key(), Some("r"));
}

#[test]
fn survival_is_monotone_with_shared_paths() {
    let m = Manifold::euclidean(1).unwrap();
    let times = [0.25, 0.5, 0.75, 1.0];
    let rep = exit_probability(&m, &[m.origin()], &m.origin(), 1.0, &times, 1e-3, 4000, 11, 1).unwrap();
    for w in rep.survival[0].windows(2) {
        assert!(w[1] <= w[0]);
    }
    // separate runs with the same seed agree with the shared-path curve
    let single = exit_probability(&m, &[m.origin()], &m.origin(), 1.0, &[0.5], 1e-3, 4000, 11, 1).unwrap();
    assert_eq!(single.survival[0][0], rep.survival[0][1]);
}

#[test]
fn killed_paths_match_exit_estimate_exactly() {
    let m = Manifold::euclidean(2).unwrap();
    let ball = Manifold::ball(m.clone(), m.origin(), 0.8).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let x = Point::intrinsic(&[0.3, 0.1]);
    let n = 3000;
    let alive = (0..n)
        .filter(|&i| sample_path(&ball, &b, &x, 0.4, 1e-3, RngKey::new(21, i as u64)).unwrap().alive)
        .count();
    let rep = exit_probability(&m, &[x], &m.origin(), 0.8, &[0.4], 1e-3, n, 21, 1).unwrap();
    assert_eq!(alive, (rep.survival[0][0] * n as f64).round() as usize);
}

#[test]
fn dead_paths_are_truncated() {
    let m = Manifold::euclidean(1).unwrap();
    let ball = Manifold::ball(m.clone(), m.origin(), 0.05).unwrap();
    let b = Bundle::trivial(1).unwrap();
    let p = sample_path(&ball, &b, &m.origin(), 1.0, 1e-3, key(1)).unwrap();
    assert!(!p.alive);
    let di = p.death_index.unwrap();
    assert_eq!(p.points.len(), di + 1);
    assert!(!ball.contains(p.end()));
}

#[test]
fn csv_dump_has_expected_columns() {
    let m = Manifold::sphere2(1.0).unwrap();
    let b = Bundle::levi_civita(&m).unwrap();
    let p = sample_path(&m, &b, &m.origin(), 0.01, 1e-3, key(1)).unwrap();
    let mut buf = Vec::new();
    p.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 2 + 3 + 1 + 8);
    assert_eq!(lines.count(), p.points.len());
}
