//! Discretised Brownian paths with lifetime and stochastic parallel
//! transport.
//!
//! A path is the geodesic random walk `x_{k+1} = exp_{x_k}(√h ξ_k)` with
//! standard Gaussian frame coefficients `ξ_k`. A path on an open subdomain is
//! killed at the first grid point outside the domain. Every estimator in the
//! crate drives the same [`Walker`], so the materialised [`PathSample`] and
//! the streaming estimators see bit-identical paths for a given key.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::bundle::{Bundle, StepTransport, Transport};
use crate::error::{Error, Result};
use crate::field::{OneForm, ScalarField};
use crate::geometry::{Manifold, Point, MAX_DIM};
use crate::linalg::{CMatrix, C64};
use crate::montecarlo::{self, Moments};
use crate::rng::RngKey;

/// Number of midpoint samples per step for singular potentials.
pub const SINGULAR_SUBSTEPS: usize = 4;

/// Validate the common sampling parameters.
pub fn check_run(model: &Manifold, x: &Point, t: f64, h: f64) -> Result<()> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::invalid("t", format!("time must be finite and nonnegative, got {t}")));
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid("h", format!("step must be positive, got {h}")));
    }
    if h > model.max_h() * (1.0 + 1e-12) {
        return Err(Error::invalid(
            "h",
            format!("step {h} exceeds the largest step {} allowed on {model}", model.max_h()),
        ));
    }
    model.check_point(x)?;
    if !model.contains(x) {
        return Err(Error::invalid("x", format!("start point {x} lies outside the domain")));
    }
    Ok(())
}

/// One step of a walk.
#[derive(Clone, Debug)]
pub struct Step {
    pub k: usize,
    pub t0: f64,
    pub dt: f64,
    pub from: Point,
    pub to: Point,
    pub transport: StepTransport,
    /// Index of the checkpoint reached at the end of this step.
    pub stop: Option<usize>,
    /// The step left the domain; the walk ends here.
    pub exited: bool,
}

/// Streaming geodesic random walk with checkpoints.
pub struct Walker<'a> {
    model: &'a Manifold,
    bundle: &'a Bundle,
    rng: ChaCha8Rng,
    h: f64,
    stops: &'a [f64],
    stop_idx: usize,
    seg_start: f64,
    seg_steps: usize,
    k: usize,
    point: Point,
    done: bool,
    alive: bool,
    complete: bool,
}

impl<'a> Walker<'a> {
    /// Walk from `x` through the increasing positive checkpoint times
    /// `stops`; the last checkpoint is the final time.
    pub fn new(model: &'a Manifold, bundle: &'a Bundle, x: Point, h: f64, stops: &'a [f64], key: RngKey) -> Self {
        Walker {
            model,
            bundle,
            rng: key.rng(),
            h,
            stops,
            stop_idx: 0,
            seg_start: 0.0,
            seg_steps: 0,
            k: 0,
            point: x,
            done: stops.is_empty(),
            alive: true,
            complete: model.is_complete(),
        }
    }

    pub fn point(&self) -> &Point {
        &self.point
    }

    pub fn alive(&self) -> bool {
        self.alive
    }

    pub fn steps_taken(&self) -> usize {
        self.k
    }

    pub fn next_step(&mut self) -> Result<Option<Step>> {
        if self.done {
            return Ok(None);
        }
        let target = self.stops[self.stop_idx];
        let t0 = self.seg_start + self.seg_steps as f64 * self.h;
        let remaining = target - t0;
        let (dt, reached) = if remaining <= self.h * (1.0 + 1e-9) { (remaining.max(0.0), true) } else { (self.h, false) };
        let m = self.model.dim();
        let s = dt.sqrt();
        let mut xi = [0.0; MAX_DIM];
        for c in xi.iter_mut().take(m) {
            let z: f64 = self.rng.sample(StandardNormal);
            *c = s * z;
        }
        let from = self.point;
        let to = self.model.exp_unchecked(&from, &xi[..m]);
        let exited = if self.complete {
            false
        } else {
            let phi = self.model.domain_value(&to);
            if !phi.is_finite() {
                return Err(Error::NonFinite { what: "domain function".into(), step: self.k });
            }
            phi <= 0.0
        };
        let transport = self.bundle.step_transport(self.model, &from, &to);
        let k = self.k;
        self.k += 1;
        self.point = to;
        let mut stop = None;
        if reached {
            stop = Some(self.stop_idx);
            self.seg_start = target;
            self.seg_steps = 0;
            self.stop_idx += 1;
            if self.stop_idx == self.stops.len() {
                self.done = true;
            }
        } else {
            self.seg_steps += 1;
        }
        if exited {
            self.alive = false;
            self.done = true;
        }
        Ok(Some(Step { k, t0, dt, from, to, transport, stop, exited }))
    }
}

/// Time integral of a scalar field along successive steps: trapezoid rule
/// for regular fields; for fields with declared singular points, midpoint
/// sampling at [`SINGULAR_SUBSTEPS`] points along the geodesic segment with
/// `|v|` capped at `1/h`.
pub struct ScalarIntegrator<'a> {
    v: &'a ScalarField,
    cap: f64,
    prev: f64,
}

impl<'a> ScalarIntegrator<'a> {
    pub fn new(v: &'a ScalarField, h: f64, start: &Point) -> Result<Self> {
        let prev = if v.is_singular() { 0.0 } else { v.eval(start) };
        if !prev.is_finite() {
            return Err(Error::NonFinite { what: format!("potential {}", v.name()), step: 0 });
        }
        Ok(ScalarIntegrator { v, cap: 1.0 / h, prev })
    }

    pub fn step(&mut self, model: &Manifold, from: &Point, to: &Point, dt: f64, k: usize) -> Result<f64> {
        if self.v.is_singular() {
            let mut acc = 0.0;
            for j in 0..SINGULAR_SUBSTEPS {
                let s = (j as f64 + 0.5) / SINGULAR_SUBSTEPS as f64;
                let p = model.geodesic_point(from, to, s);
                let val = self.v.eval(&p);
                if val.is_nan() {
                    return Err(Error::NonFinite { what: format!("potential {}", self.v.name()), step: k });
                }
                acc += val.clamp(-self.cap, self.cap);
            }
            Ok(dt * acc / SINGULAR_SUBSTEPS as f64)
        } else {
            let next = self.v.eval(to);
            if !next.is_finite() {
                return Err(Error::NonFinite { what: format!("potential {}", self.v.name()), step: k + 1 });
            }
            let out = 0.5 * dt * (self.prev + next);
            self.prev = next;
            Ok(out)
        }
    }
}

/// Stratonovich increment `β(mid)[Δx]` of one step.
#[inline]
pub fn line_step(model: &Manifold, beta: &OneForm, from: &Point, to: &Point) -> f64 {
    let mid = model.geodesic_point(from, to, 0.5);
    beta.pair(model, from, to, &mid)
}

/// A materialised path.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub points: Vec<Point>,
    pub alive: bool,
    pub death_index: Option<usize>,
    /// `T_k` for each step, as `d×d` unitary matrices.
    pub transports: Vec<CMatrix>,
    pub h: f64,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn end(&self) -> &Point {
        self.points.last().unwrap()
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Accumulated transports `P_k = T_0 ⋯ T_{k-1}`, `k = 0..=K`.
    pub fn accumulated_transports(&self) -> Vec<CMatrix> {
        let d = self.transports.first().map_or(1, |t| t.nrows());
        let mut out = Vec::with_capacity(self.points.len());
        let mut p = crate::linalg::identity(d);
        out.push(p.clone());
        for t in &self.transports {
            p = &p * t;
            out.push(p.clone());
        }
        out
    }

    /// CSV dump: `step,time,coord…,alive,transport entries`, where the
    /// transport columns hold the accumulated transport `P_k` row-major
    /// with real and imaginary parts interleaved.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let nc = self.points[0].len();
        let d = self.transports.first().map_or(0, |t| t.nrows());
        write!(w, "step,time")?;
        for i in 0..nc {
            write!(w, ",x{i}")?;
        }
        write!(w, ",alive")?;
        for r in 0..d {
            for c in 0..d {
                write!(w, ",T{r}{c}_re,T{r}{c}_im")?;
            }
        }
        writeln!(w)?;
        let acc = self.accumulated_transports();
        for (k, p) in self.points.iter().enumerate() {
            write!(w, "{k},{}", self.times[k])?;
            for c in p.coords() {
                write!(w, ",{c}")?;
            }
            let alive = self.death_index.is_none_or(|di| k < di);
            write!(w, ",{}", u8::from(alive))?;
            if d > 0 {
                for r in 0..d {
                    for c in 0..d {
                        let z = acc[k][(r, c)];
                        write!(w, ",{},{}", z.re, z.im)?;
                    }
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Sample one path up to time `t` with step `h` (last step possibly shorter).
pub fn sample_path(model: &Manifold, bundle: &Bundle, x: &Point, t: f64, h: f64, key: RngKey) -> Result<PathSample> {
    check_run(model, x, t, h)?;
    bundle.check_model(model)?;
    let d = bundle.rank();
    let mut path = PathSample {
        times: vec![0.0],
        points: vec![*x],
        alive: true,
        death_index: None,
        transports: Vec::new(),
        h,
    };
    if t == 0.0 {
        return Ok(path);
    }
    let stops = [t];
    let mut w = Walker::new(model, bundle, *x, h, &stops, key);
    while let Some(step) = w.next_step()? {
        path.times.push(step.t0 + step.dt);
        path.points.push(step.to);
        path.transports.push(step.transport.matrix(d));
        if step.exited {
            path.alive = false;
            path.death_index = Some(step.k + 1);
        }
    }
    if let Some(last) = path.times.last_mut() {
        if path.alive {
            *last = t;
        }
    }
    Ok(path)
}

/// `∫_0^t v(B_s) ds` along a path (up to its death index).
pub fn integrate_scalar_along(model: &Manifold, path: &PathSample, v: &ScalarField) -> Result<f64> {
    let mut integ = ScalarIntegrator::new(v, path.h, &path.points[0])?;
    let mut total = 0.0;
    for k in 0..path.points.len() - 1 {
        let dt = path.times[k + 1] - path.times[k];
        total += integ.step(model, &path.points[k], &path.points[k + 1], dt, k)?;
    }
    Ok(total)
}

/// Stratonovich line integral `∫ β(∘dB)` by the geodesic midpoint rule.
pub fn stratonovich_line_integral(model: &Manifold, path: &PathSample, beta: &OneForm) -> Result<f64> {
    let mut total = 0.0;
    for k in 0..path.points.len() - 1 {
        let inc = line_step(model, beta, &path.points[k], &path.points[k + 1]);
        if !inc.is_finite() {
            return Err(Error::NonFinite { what: format!("1-form {}", beta.name()), step: k });
        }
        total += inc;
    }
    Ok(total)
}

/// Survival probabilities `P{t < ζ(r, x)}` for the ball of radius `r`
/// about `origin`, at each start point and each time in `times` (shared
/// paths across times).
#[derive(Clone, Debug)]
pub struct ExitReport {
    pub times: Vec<f64>,
    /// `survival[i][j]`: start point `i`, time `j`.
    pub survival: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    /// Infimum over start points, per time.
    pub inf: Vec<f64>,
    pub n: usize,
    pub h: f64,
    pub seed: u64,
}

#[allow(clippy::too_many_arguments)]
pub fn exit_probability(
    model: &Manifold,
    starts: &[Point],
    origin: &Point,
    r: f64,
    times: &[f64],
    h: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<ExitReport> {
    if !model.is_complete() {
        return Err(Error::invalid("manifold", "exit times are measured on a complete model"));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(Error::invalid("t-grid", "times must be positive and increasing"));
    }
    if n == 0 {
        return Err(Error::invalid("n", "need at least one path"));
    }
    for x in starts {
        if model.distance(origin, x) >= r {
            return Err(Error::invalid("r", format!("radius {r} must exceed d(O, x) = {}", model.distance(origin, x))));
        }
    }
    let ball = Manifold::ball(model.clone(), *origin, r)?;
    let bundle = Bundle::trivial(1)?;
    let mut report = ExitReport {
        times: times.to_vec(),
        survival: Vec::new(),
        stderr: Vec::new(),
        inf: vec![f64::INFINITY; times.len()],
        n,
        h,
        seed,
    };
    for x in starts {
        let m = survival_moments(&ball, &bundle, x, times, h, n, seed, workers)?;
        let s: Vec<f64> = m.mean().to_vec();
        let e: Vec<f64> = (0..times.len()).map(|j| m.stderr(j)).collect();
        for (j, v) in s.iter().enumerate() {
            report.inf[j] = report.inf[j].min(*v);
        }
        report.survival.push(s);
        report.stderr.push(e);
    }
    Ok(report)
}

/// Alive indicators at each checkpoint for `n` paths on `model`.
#[allow(clippy::too_many_arguments)]
pub fn survival_moments(
    model: &Manifold,
    bundle: &Bundle,
    x: &Point,
    times: &[f64],
    h: f64,
    n: usize,
    seed: u64,
    workers: usize,
) -> Result<Moments> {
    check_run(model, x, *times.last().unwrap(), h)?;
    let p = times.len();
    montecarlo::reduce(n, workers, || Moments::new(p), |i, acc| {
        let mut w = Walker::new(model, bundle, *x, h, times, RngKey::new(seed, i as u64));
        let mut alive = vec![0.0; p];
        while let Some(step) = w.next_step()? {
            if step.exited {
                break;
            }
            if let Some(j) = step.stop {
                alive[j] = 1.0;
            }
        }
        acc.push(&alive);
        Ok(())
    })
}

/// Complex phase `e^{iθ}` as used by magnetic transports.
#[inline]
pub fn phase(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// The inverse transport accumulated along a streaming walk.
pub fn transport_start(bundle: &Bundle) -> Transport {
    Transport::identity(bundle)
}

#[cfg(test)]
mod tests;
