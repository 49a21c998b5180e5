//! Kato-class diagnostics: the heat-kernel smoothed integral
//! `∫_0^t ∫_M p_s(x,y)|v(y)| dvol(y) ds`, its decay as `t → 0`, and the
//! Khas'minskii constants built from it.
//!
//! Time integrals use Gauss–Legendre in `log s` over `[10⁻⁸t, t]` plus a
//! power-law tail. The space integral is either a radial reduction (radial
//! fields on `R^m`, `m ≤ 3`) or geodesic polar coordinates about `x`. On an
//! open subdomain the kernel of the complete base model is used, which bounds
//! the Dirichlet kernel from above.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::field::{Radial, ScalarField};
use crate::geometry::{euclidean_kernel, hyperbolic_kernel, sphere_kernel_abs, Manifold, Point};
use crate::montecarlo::{self, Moments};
use crate::paths::{check_run, ScalarIntegrator, Walker};
use crate::quad::{gauss_legendre, tanh_sinh_split};
use crate::rng::RngKey;

/// Smallest time node relative to `t`.
const TIME_FLOOR: f64 = 1e-8;
/// Relative disagreement between the two quadrature resolutions that makes a
/// value inconclusive.
pub const REFINEMENT_TOL: f64 = 1e-4;
/// A tail exponent at least this large means the time integral diverges.
const DIVERGENT_EXPONENT: f64 = 0.999;
/// Relative drop of the kernel that ends the radial range (`e^{-46}`).
const GAUSS_REACH: f64 = 92.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    KatoConsistent,
    Inconclusive,
    FailsDecay,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::KatoConsistent => "katoConsistent",
            Verdict::Inconclusive => "inconclusive",
            Verdict::FailsDecay => "failsDecay",
        })
    }
}

/// Value of the smoothed integral at one start point.
#[derive(Clone, Copy, Debug)]
pub struct KatoValue {
    pub value: f64,
    /// Relative difference between the coarse and refined quadratures.
    pub refinement: f64,
}

impl KatoValue {
    pub fn converged(&self) -> bool {
        self.value.is_infinite() || self.refinement <= REFINEMENT_TOL
    }
}

/// `sup` over a finite grid of start points.
#[derive(Clone, Debug)]
pub struct KatoSup {
    pub value: f64,
    pub argmax: usize,
    pub refinement: f64,
}

#[derive(Clone, Debug)]
pub struct KatoReport {
    /// Decreasing times.
    pub t_grid: Vec<f64>,
    pub sup_integral: Vec<f64>,
    pub argmax: Vec<usize>,
    pub refinement: Vec<f64>,
    /// Least-squares slope of `log sup_integral` against `log t`.
    pub fitted_decay_exponent: Option<f64>,
    pub verdict: Verdict,
}

/// Tunable decay-verdict threshold: `sup(t_min) < ratio · sup(t_max)`.
pub const DECAY_RATIO: f64 = 0.05;

/// Space integral `F(s) = ∫ p_s(x,y)|v(y)| dvol(y)` for a fixed start point.
trait SpaceIntegral {
    fn at(&self, s: f64, fine: bool) -> f64;
}

/// Radial reduction on `R^m`: `F(s) = ∫_0^∞ g(r) K_s(ρ, r) dr` with the
/// angular average of the Gaussian kernel in closed form.
struct RadialIntegral {
    m: usize,
    rho: f64,
    profile: crate::field::ProfileFn,
    breaks: Vec<f64>,
}

impl RadialIntegral {
    fn kernel(&self, s: f64, r: f64) -> f64 {
        let rho = self.rho;
        let g = (-(r - rho) * (r - rho) / (2.0 * s)).exp();
        match self.m {
            1 => (g + (-(r + rho) * (r + rho) / (2.0 * s)).exp()) / (2.0 * PI * s).sqrt(),
            2 => r / s * g * i0e(r * rho / s),
            _ => {
                if rho == 0.0 {
                    2.0 * r * r / s * (-r * r / (2.0 * s)).exp() / (2.0 * PI * s).sqrt()
                } else {
                    (r / rho) * g * (-(-2.0 * r * rho / s).exp_m1()) / (2.0 * PI * s).sqrt()
                }
            }
        }
    }
}

impl SpaceIntegral for RadialIntegral {
    fn at(&self, s: f64, fine: bool) -> f64 {
        let reach = (GAUSS_REACH * s).sqrt();
        let lo = (self.rho - reach).max(0.0);
        let hi = self.rho + reach;
        let mut breaks = self.breaks.clone();
        breaks.push(self.rho);
        // split further so the adaptive rule sees the peak at its own scale
        for k in [-2.0, -1.0, 1.0, 2.0] {
            breaks.push(self.rho + k * s.sqrt());
        }
        let tol = if fine { 1e-13 } else { 1e-10 };
        let f = |r: f64| {
            if r <= 0.0 {
                return 0.0;
            }
            let k = self.kernel(s, r);
            if k == 0.0 {
                0.0
            } else {
                (self.profile)(r).abs() * k
            }
        };
        let scale = (self.profile)(self.rho.max(s.sqrt())).abs().max(1e-300);
        tanh_sinh_split(f, lo, hi, &breaks, tol * scale)
    }
}

/// Geodesic polar coordinates about `x`: radial Gauss–Legendre panels
/// (geometric near `x`, split at the distances of singular points) times an
/// angular rule. Angular averages do not depend on `s` and are cached.
struct PolarIntegral {
    model: Manifold,
    coarse: Vec<(f64, f64)>,
    fine: Vec<(f64, f64)>,
}

impl PolarIntegral {
    fn new(model: &Manifold, v: &ScalarField, x: &Point, t: f64) -> Result<Self> {
        let base = model.base().clone();
        let m = base.dim();
        let domain = model.clone();
        let rho_max = match &base {
            Manifold::Sphere2 { radius } => PI * radius,
            Manifold::Hyperbolic => ((GAUSS_REACH * t).sqrt() + t).min(30.0),
            _ => (GAUSS_REACH * t).sqrt(),
        };
        let rho_min = 1e-3 * (TIME_FLOOR * t).sqrt();
        let mut edges = vec![0.0];
        let mut e = rho_min;
        while e < rho_max {
            edges.push(e);
            e *= 2.0;
        }
        edges.push(rho_max);
        for p in v.singular_points() {
            let d = base.distance(x, p);
            if d > rho_min && d < rho_max {
                edges.push(d);
            }
        }
        edges.sort_by(f64::total_cmp);
        edges.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        let build = |order: usize, angular: usize| -> Result<Vec<(f64, f64)>> {
            let dirs = directions(m, angular)?;
            let mut out = Vec::new();
            for w in edges.windows(2) {
                for (rho, wr) in gauss_legendre(order, w[0], w[1]) {
                    let jac = match &base {
                        Manifold::Sphere2 { radius } => radius * (rho / radius).sin(),
                        Manifold::Hyperbolic => rho.sinh(),
                        _ => rho.powi(m as i32 - 1),
                    };
                    let mut avg = 0.0;
                    for (dir, wd) in &dirs {
                        let xi: Vec<f64> = dir.iter().map(|c| c * rho).collect();
                        let y = base.exp_unchecked(x, &xi);
                        if domain.contains(&y) {
                            avg += wd * v.eval(&y).abs();
                        }
                    }
                    out.push((rho, wr * jac * avg));
                }
            }
            Ok(out)
        };
        let coarse = build(8, 1)?;
        let fine = build(16, 2)?;
        Ok(PolarIntegral { model: base, coarse, fine })
    }

    fn radial_kernel(&self, s: f64, rho: f64) -> f64 {
        match &self.model {
            Manifold::Sphere2 { radius } => sphere_kernel_abs(s, rho, *radius),
            Manifold::Hyperbolic => hyperbolic_kernel(s, rho).unwrap_or(0.0),
            m => euclidean_kernel(m.dim(), s, rho * rho),
        }
    }
}

impl SpaceIntegral for PolarIntegral {
    fn at(&self, s: f64, fine: bool) -> f64 {
        let nodes = if fine { &self.fine } else { &self.coarse };
        // beyond this distance the kernel is below e^{-46} of its peak
        let reach = (GAUSS_REACH * s).sqrt() + s;
        nodes.iter().filter(|(rho, _)| *rho <= reach).map(|(rho, w)| w * self.radial_kernel(s, *rho)).sum()
    }
}

/// Unit directions with weights summing to the area of the unit sphere
/// `S^{m-1}`; `level` doubles the resolution.
fn directions(m: usize, level: usize) -> Result<Vec<(Vec<f64>, f64)>> {
    match m {
        1 => Ok(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)]),
        2 => {
            let n = 64 * level;
            Ok((0..n)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n as f64;
                    (vec![a.cos(), a.sin()], 2.0 * PI / n as f64)
                })
                .collect())
        }
        3 => {
            let nz = 16 * level;
            let na = 32 * level;
            let mut out = Vec::new();
            for (z, wz) in gauss_legendre(nz, -1.0, 1.0) {
                let r = (1.0 - z * z).sqrt();
                for k in 0..na {
                    let a = 2.0 * PI * k as f64 / na as f64;
                    out.push((vec![r * a.cos(), r * a.sin(), z], wz * 2.0 * PI / na as f64));
                }
            }
            Ok(out)
        }
        _ => Err(Error::invalid("manifold", format!("Kato quadrature supports dimension ≤ 3 (got {m})"))),
    }
}

/// `I₀(z) e^{-z}`.
pub fn i0e(z: f64) -> f64 {
    let z = z.abs();
    if z <= 50.0 {
        let q = 0.25 * z * z;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum * (-z).exp()
    } else {
        // asymptotic series Σ ((2k-1)!!)² / (k! (8z)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..=8 {
            let kf = k as f64;
            term *= (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * z);
            sum += term;
        }
        sum / (2.0 * PI * z).sqrt()
    }
}

fn space_integral(model: &Manifold, v: &ScalarField, x: &Point, t: f64) -> Result<Box<dyn SpaceIntegral>> {
    let base = model.base();
    if let (Manifold::Euclidean { m }, Some(Radial { center, profile, breaks })) = (base, v.radial_structure()) {
        if *m <= 3 && model.is_complete() && center.len() == *m {
            let rho = base.distance(x, center);
            return Ok(Box::new(RadialIntegral { m: *m, rho, profile: profile.clone(), breaks: breaks.clone() }));
        }
    }
    Ok(Box::new(PolarIntegral::new(model, v, x, t)?))
}

/// `∫_0^t F(s) ds` in `log s` with `panels` × 16 Gauss–Legendre nodes plus a
/// power-law tail below `10⁻⁸t`.
fn time_integral(f: &dyn SpaceIntegral, t: f64, panels: usize, fine: bool) -> f64 {
    let u0 = TIME_FLOOR.ln();
    let mut total = 0.0;
    for p in 0..panels {
        let a = u0 * (1.0 - p as f64 / panels as f64);
        let b = u0 * (1.0 - (p + 1) as f64 / panels as f64);
        for (u, w) in gauss_legendre(16, a, b) {
            let s = t * u.exp();
            total += w * s * f.at(s, fine);
        }
    }
    let s0 = TIME_FLOOR * t;
    let f0 = f.at(s0, fine);
    let f1 = f.at(2.0 * s0, fine);
    if f0 > 0.0 && f1 > 0.0 {
        let alpha = (f0 / f1).ln() / 2f64.ln();
        if alpha >= DIVERGENT_EXPONENT {
            return f64::INFINITY;
        }
        total += f0 * s0 / (1.0 - alpha);
    }
    total
}

/// `∫_0^t ∫ p_s(x,y)|v(y)| dvol(y) ds` at one start point.
pub fn kato_integral(model: &Manifold, v: &ScalarField, t: f64, x: &Point) -> Result<KatoValue> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("need t > 0, got {t}")));
    }
    model.check_point(x).map_err(|e| Error::invalid("x", e.to_string()))?;
    let f = space_integral(model, v, x, t)?;
    let coarse = time_integral(f.as_ref(), t, 2, false);
    let fine = time_integral(f.as_ref(), t, 4, true);
    if fine.is_infinite() || coarse.is_infinite() {
        return Ok(KatoValue { value: f64::INFINITY, refinement: 0.0 });
    }
    let refinement = if fine == 0.0 { (coarse - fine).abs() } else { ((coarse - fine) / fine).abs() };
    Ok(KatoValue { value: fine, refinement })
}

/// `sup` of [`kato_integral`] over `x_grid`.
pub fn kato_sup_integral(model: &Manifold, v: &ScalarField, t: f64, x_grid: &[Point]) -> Result<KatoSup> {
    if x_grid.is_empty() {
        return Err(Error::invalid("x-grid", "need at least one start point"));
    }
    let mut best = KatoSup { value: f64::NEG_INFINITY, argmax: 0, refinement: 0.0 };
    for (i, x) in x_grid.iter().enumerate() {
        let k = kato_integral(model, v, t, x)?;
        if k.value > best.value {
            best.value = k.value;
            best.argmax = i;
        }
        best.refinement = best.refinement.max(k.refinement);
    }
    Ok(best)
}

/// Decay of the sup-integral along a decreasing time grid.
pub fn kato_report(model: &Manifold, v: &ScalarField, t_grid: &[f64], x_grid: &[Point]) -> Result<KatoReport> {
    if t_grid.len() < 2 {
        return Err(Error::invalid("t-grid", "need at least two times"));
    }
    if t_grid.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("t-grid", "times must be strictly decreasing"));
    }
    let mut rep = KatoReport {
        t_grid: t_grid.to_vec(),
        sup_integral: Vec::new(),
        argmax: Vec::new(),
        refinement: Vec::new(),
        fitted_decay_exponent: None,
        verdict: Verdict::Inconclusive,
    };
    for &t in t_grid {
        let s = kato_sup_integral(model, v, t, x_grid)?;
        rep.sup_integral.push(s.value);
        rep.argmax.push(s.argmax);
        rep.refinement.push(s.refinement);
    }
    let finite = rep.sup_integral.iter().all(|v| v.is_finite());
    if finite && rep.sup_integral.iter().all(|v| *v > 0.0) {
        let pts: Vec<(f64, f64)> = t_grid.iter().zip(&rep.sup_integral).map(|(t, v)| (t.ln(), v.ln())).collect();
        rep.fitted_decay_exponent = Some(slope(&pts));
    }
    let first = rep.sup_integral[0];
    let last = *rep.sup_integral.last().unwrap();
    let monotone = rep.sup_integral.windows(2).all(|w| w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0));
    rep.verdict = if !finite {
        Verdict::FailsDecay
    } else if rep.refinement.iter().any(|r| *r > REFINEMENT_TOL) {
        Verdict::Inconclusive
    } else if monotone && (last < DECAY_RATIO * first || first == 0.0) {
        Verdict::KatoConsistent
    } else {
        Verdict::FailsDecay
    };
    Ok(rep)
}

/// Least-squares slope of `y` against `x`.
pub fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Result of the `L^p` inclusion check.
#[derive(Clone, Debug)]
pub struct LpReport {
    pub p: f64,
    /// Is `p` above the inclusion threshold (`p ≥ 1` for `m = 1`, `p > m/2`)?
    pub above_threshold: bool,
    pub report: KatoReport,
}

/// Decay check for a field declared to lie in `L^p`. Below the threshold the
/// check is still run and may legitimately fail.
pub fn lp_inclusion_check(model: &Manifold, v: &ScalarField, p: f64, t_grid: &[f64], x_grid: &[Point]) -> Result<LpReport> {
    if !(p >= 1.0) {
        return Err(Error::invalid("p", format!("need p ≥ 1, got {p}")));
    }
    let m = model.dim() as f64;
    let above_threshold = if model.dim() == 1 { p >= 1.0 } else { p > 0.5 * m };
    Ok(LpReport { p, above_threshold, report: kato_report(model, v, t_grid, x_grid)? })
}

/// Constants of the exponential moment bound
/// `sup_x E[e^{∫_0^t |v|} 1_{t<ζ}] ≤ 2 e^{t C_v}`.
#[derive(Clone, Debug)]
pub struct KhasminskiiConstants {
    pub t0: f64,
    /// `C(v, t0)`, the sup-integral at `t0`.
    pub c_t0: f64,
    /// Quadrature uncertainty of `c_t0` (relative refinement × value).
    pub c_t0_error: f64,
    pub cv: f64,
    pub prefactor: f64,
}

impl KhasminskiiConstants {
    pub fn bound(&self, t: f64) -> f64 {
        self.prefactor * (t * self.cv).exp()
    }
}

/// Target for `C(v, t0)`, safely below `1/2`.
pub const KHASMINSKII_TARGET: f64 = 0.45;

/// Find `t0 ≤ t_max` with `C(v, t0) < 0.45` by bisection in `log t` and set
/// `C_v = log(1/(1 − C(v,t0)))/t0`.
pub fn khasminskii_constants(model: &Manifold, v: &ScalarField, x_grid: &[Point], t_max: f64) -> Result<KhasminskiiConstants> {
    let h_min = 1e-8 * t_max;
    let c = |t: f64| kato_sup_integral(model, v, t, x_grid);
    let make = |t0: f64, s: KatoSup| KhasminskiiConstants {
        t0,
        c_t0: s.value,
        c_t0_error: s.refinement * s.value,
        cv: (1.0 / (1.0 - s.value)).ln() / t0,
        prefactor: 2.0,
    };
    let top = c(t_max)?;
    if top.value < KHASMINSKII_TARGET {
        return Ok(make(t_max, top));
    }
    let bottom = c(h_min)?;
    if !(bottom.value < KHASMINSKII_TARGET) {
        return Err(Error::Numerical(format!(
            "no t0 ≥ {h_min:e} with C(v, t0) < {KHASMINSKII_TARGET}: potential not Kato-tractable at this resolution"
        )));
    }
    let (mut lo, mut hi) = (h_min.ln(), t_max.ln());
    let mut best = (h_min, bottom);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        let s = c(mid.exp())?;
        if s.value < KHASMINSKII_TARGET {
            lo = mid;
            best = (mid.exp(), s);
        } else {
            hi = mid;
        }
        if hi - lo < 2e-2 {
            break;
        }
    }
    Ok(make(best.0, best.1))
}

/// Empirical exponential moment at one `(x, t)`.
#[derive(Clone, Debug)]
pub struct MomentCheck {
    pub x: usize,
    pub t: f64,
    pub mean: f64,
    pub stderr: f64,
    pub bound: f64,
}

impl MomentCheck {
    pub fn holds(&self) -> bool {
        self.mean <= self.bound + 3.0 * self.stderr
    }
}

/// Monte Carlo `E[e^{∫_0^t |v|} 1_alive]` on every grid point and time,
/// compared with `2 e^{t C_v}`. Singular fields are capped at `1/h`.
#[allow(clippy::too_many_arguments)]
pub fn khasminskii_empirical(
    model: &Manifold,
    v: &ScalarField,
    constants: &KhasminskiiConstants,
    x_grid: &[Point],
    t_grid: &[f64],
    h: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Vec<MomentCheck>> {
    let mut times = t_grid.to_vec();
    times.sort_by(f64::total_cmp);
    let t_end = *times.last().ok_or_else(|| Error::invalid("t-grid", "empty"))?;
    let bundle = crate::bundle::Bundle::trivial(1)?;
    let absv = v.abs();
    let mut out = Vec::new();
    for (ix, x) in x_grid.iter().enumerate() {
        check_run(model, x, t_end, h)?;
        let mom = montecarlo::reduce(n, workers, || Moments::new(times.len()), |i, acc| {
            let mut w = Walker::new(model, &bundle, *x, h, &times, RngKey::new(seed, i as u64));
            let mut integ = ScalarIntegrator::new(&absv, h, x)?;
            let mut total = 0.0;
            let mut row = vec![0.0; times.len()];
            while let Some(step) = w.next_step()? {
                if step.exited {
                    break;
                }
                total += integ.step(model, &step.from, &step.to, step.dt, step.k)?;
                if let Some(j) = step.stop {
                    row[j] = total.exp();
                }
            }
            acc.push(&row);
            Ok(())
        })?;
        for (j, t) in times.iter().enumerate() {
            out.push(MomentCheck { x: ix, t: *t, mean: mom.mean()[j], stderr: mom.stderr(j), bound: constants.bound(*t) });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
