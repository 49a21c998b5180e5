//! Feynman–Kac estimators of `e^{-tH(V)}` acting on sections, and the
//! numerical checks built on them.
//!
//! Every estimator drives the same streaming walk: path `i` of a run with
//! seed `s` uses the stream `(s, i)`, so estimators that share a seed see
//! the same paths. A sample at time `t` is `𝒱_t P_t f(B_t) 1_{t<ζ}`, where
//! `P_t` carries fiber coordinates at `B_t` back to the start fiber.

mod checks;
mod ground;
mod resolvent;
mod smoothing;

pub use checks::*;
pub use ground::*;
pub use resolvent::*;
pub use smoothing::*;

use crate::bundle::{Bundle, Transport};
use crate::error::{Error, Result};
use crate::field::{KatoClass, OneForm, Potential, ScalarField, Section};
use crate::geometry::{Manifold, Point};
use crate::holonomy::{HolonomyStepper, Weight};
use crate::linalg::{self, CVector, C64};
use crate::montecarlo::{self, Estimate, Merge, Moments, Tally};
use crate::paths::{check_run, Walker};
use crate::rng::RngKey;

/// Relative tolerance of the per-sample domination bound.
pub const DOMINATION_TOL: f64 = 1e-9;

/// Model, bundle and potential of one Schrödinger operator.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a Manifold,
    pub bundle: &'a Bundle,
    pub potential: &'a Potential,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a Manifold, bundle: &'a Bundle, potential: &'a Potential) -> Result<Self> {
        bundle.check_model(model)?;
        if bundle.rank() != potential.rank() {
            return Err(Error::invalid(
                "potential",
                format!("potential rank {} does not match bundle rank {}", potential.rank(), bundle.rank()),
            ));
        }
        Ok(Problem { model, bundle, potential })
    }

    pub fn rank(&self) -> usize {
        self.bundle.rank()
    }

    fn check_section(&self, f: &Section) -> Result<()> {
        if f.rank() != self.rank() {
            return Err(Error::invalid("f", format!("section rank {} does not match bundle rank {}", f.rank(), self.rank())));
        }
        Ok(())
    }
}

/// Monte Carlo budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McSpec {
    pub h: f64,
    pub n: usize,
    pub seed: u64,
    pub workers: usize,
}

impl McSpec {
    pub fn new(h: f64, n: usize, seed: u64) -> Self {
        McSpec { h, n, seed, workers: 1 }
    }

    pub fn workers(mut self, w: usize) -> Self {
        self.workers = w.max(1);
        self
    }

    fn check(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n", "need at least one path"));
        }
        Ok(())
    }
}

/// State of one path at a checkpoint.
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: f64,
    pub end: Point,
    pub alive: bool,
    pub weight: Weight,
    pub transport: Transport,
    /// `∫ v` of the scalar floor so far.
    pub floor: f64,
    /// `∫ ‖V⁽²⁾‖` so far.
    pub negative: f64,
    /// Weight and `∫‖V⁽²⁾‖` accumulated since the restart checkpoint.
    pub restarted: Option<(Weight, f64)>,
}

fn apply_weight(w: &Weight, v: CVector) -> CVector {
    match w {
        Weight::Scalar { log, .. } => v * C64::new(log.exp(), 0.0),
        Weight::Matrix(m) => m * v,
    }
}

impl Snapshot {
    /// `𝒱 P f(B_t) 1_alive`.
    pub fn value(&self, f: &Section) -> CVector {
        if !self.alive {
            return CVector::zeros(f.rank());
        }
        apply_weight(&self.weight, self.transport.apply(&f.eval(&self.end)))
    }

    /// `P f(B_t) 1_alive` (no potential).
    pub fn free_value(&self, f: &Section) -> CVector {
        if !self.alive {
            return CVector::zeros(f.rank());
        }
        self.transport.apply(&f.eval(&self.end))
    }

    /// `𝒱_s⁻¹ 𝒱_t P f(B_t) 1_alive` with `s` the restart checkpoint.
    pub fn restarted_value(&self, f: &Section) -> CVector {
        match (&self.restarted, self.alive) {
            (Some((w, _)), true) => apply_weight(w, self.transport.apply(&f.eval(&self.end))),
            _ => CVector::zeros(f.rank()),
        }
    }

    /// `e^{-∫ v}` of the scalar floor, the comparison weight of domination.
    pub fn floor_weight(&self) -> f64 {
        if self.alive {
            (-self.floor).exp()
        } else {
            0.0
        }
    }

    /// Apply this path's weight and transport to a vector in the fiber at
    /// the endpoint.
    pub fn carry(&self, v: &CVector) -> CVector {
        if !self.alive {
            return CVector::zeros(v.len());
        }
        apply_weight(&self.weight, self.transport.apply(v))
    }
}

/// Follow one path from `x` through the nondecreasing checkpoint times
/// `stops` (leading zeros allowed). With `restart = Some(j)` a second weight
/// starts at the identity at checkpoint `j`.
pub fn trajectory(prob: &Problem, x: &Point, stops: &[f64], restart: Option<usize>, h: f64, key: RngKey) -> Result<Vec<Snapshot>> {
    let d = prob.rank();
    let mut weight = Weight::identity(d);
    let mut transport = Transport::identity(prob.bundle);
    let (mut floor, mut negative) = (0.0, 0.0);
    let mut restarted: Option<(Weight, f64)> = None;
    let mut out = Vec::with_capacity(stops.len());
    let lead = stops.iter().take_while(|&&s| s == 0.0).count();
    for j in 0..lead {
        if restart == Some(j) {
            restarted = Some((Weight::identity(d), 0.0));
        }
        out.push(Snapshot { t: 0.0, end: *x, alive: true, weight: weight.clone(), transport: transport.clone(), floor, negative, restarted: restarted.clone() });
    }
    let walk_stops = &stops[lead..];
    if walk_stops.is_empty() {
        return Ok(out);
    }
    let scalar = prob.potential.as_scalar().is_some();
    let mut stepper = HolonomyStepper::new(prob.potential, h, x)?;
    let mut walker = Walker::new(prob.model, prob.bundle, *x, h, walk_stops, key);
    let mut last = *x;
    while let Some(step) = walker.next_step()? {
        if step.exited {
            last = step.to;
            break;
        }
        let field = if scalar {
            transport.push(&step.transport);
            stepper.step(prob.model, &step.from, &step.to, &transport, &transport, step.dt, step.k)?
        } else {
            let before = transport.clone();
            transport.push(&step.transport);
            stepper.step(prob.model, &step.from, &step.to, &before, &transport, step.dt, step.k)?
        };
        weight.advance(&field);
        floor += field.floor_integral;
        negative += field.negative_integral;
        if let Some((w, n)) = restarted.as_mut() {
            w.advance(&field);
            *n += field.negative_integral;
        }
        if let Some(j) = step.stop {
            let idx = lead + j;
            if restart == Some(idx) {
                restarted = Some((Weight::identity(d), 0.0));
            }
            out.push(Snapshot {
                t: stops[idx],
                end: step.to,
                alive: true,
                weight: weight.clone(),
                transport: transport.clone(),
                floor,
                negative,
                restarted: restarted.clone(),
            });
        }
        last = step.to;
    }
    while out.len() < stops.len() {
        let t = stops[out.len()];
        out.push(Snapshot { t, end: last, alive: false, weight: weight.clone(), transport: transport.clone(), floor, negative, restarted: None });
    }
    Ok(out)
}

/// Per-sample domination `‖𝒱 P f‖ ≤ e^{-∫v}|f|` bookkeeping: `hits` counts
/// violations, `max` is the largest relative excess.
pub fn domination_excess(lhs: f64, rhs: f64) -> f64 {
    if lhs <= rhs {
        0.0
    } else if rhs > 0.0 {
        lhs / rhs - 1.0
    } else {
        f64::INFINITY
    }
}

fn record_domination(tally: &mut Tally, i: usize, lhs: f64, rhs: f64) {
    tally.count += 1;
    let e = domination_excess(lhs, rhs);
    if e > DOMINATION_TOL && lhs - rhs > 1e-300 {
        tally.hits += 1;
        if tally.first_hit.is_none() {
            tally.first_hit = Some(i);
        }
    }
    tally.max = tally.max.max(e);
}

/// Result of a Feynman–Kac run at one time.
#[derive(Clone, Debug)]
pub struct FkResult {
    pub estimate: Estimate,
    /// `E[e^{-∫v} |f(B_t)| 1_alive]`: the scalar comparison semigroup on `|f|`.
    pub floor: Estimate,
    /// Per-sample domination violations (`hits`) and largest excess (`max`).
    pub domination: Tally,
}

impl FkResult {
    pub fn value(&self) -> &[C64] {
        &self.estimate.value
    }
}

struct FkAcc {
    m: Moments,
    dom: Tally,
    fmax: f64,
}

impl Merge for FkAcc {
    fn merge(&mut self, b: FkAcc) {
        self.m.merge(b.m);
        self.dom.merge(b.dom);
        self.fmax = self.fmax.max(b.fmax);
    }
}

fn check_sup(f: &Section, fmax: f64) -> Result<()> {
    if let Some(s) = f.sup_norm() {
        if fmax > s + 1e-12 {
            return Err(Error::invalid("f", format!("sampled |f| = {fmax} exceeds the declared bound {s}")));
        }
    }
    Ok(())
}

/// `E[𝒱_t P_t f(B_t) 1_{t<ζ}]` with the per-sample domination bound
/// recorded on every path.
pub fn fk_vector(prob: &Problem, f: &Section, x: &Point, t: f64, mc: &McSpec) -> Result<FkResult> {
    prob.check_section(f)?;
    mc.check()?;
    check_run(prob.model, x, t, mc.h)?;
    let d = prob.rank();
    let stops = [t];
    let acc = montecarlo::reduce(
        mc.n,
        mc.workers,
        || FkAcc { m: Moments::new(2 * d + 2), dom: Tally::default(), fmax: 0.0 },
        |i, acc| {
            let snap = trajectory(prob, x, &stops, None, mc.h, RngKey::new(mc.seed, i as u64))?.pop().unwrap();
            let fy = f.eval(&snap.end);
            let fnorm = linalg::vec_norm(&fy);
            let mut row = vec![0.0; 2 * d + 2];
            if snap.alive {
                let v = apply_weight(&snap.weight, snap.transport.apply(&fy));
                for (k, z) in v.iter().enumerate() {
                    row[2 * k] = z.re;
                    row[2 * k + 1] = z.im;
                }
                let rhs = snap.floor_weight() * fnorm;
                row[2 * d] = rhs;
                row[2 * d + 1] = 1.0;
                record_domination(&mut acc.dom, i, linalg::vec_norm(&v), rhs);
                acc.fmax = acc.fmax.max(fnorm);
            } else {
                acc.dom.count += 1;
            }
            acc.m.push(&row);
            Ok(())
        },
    )?;
    check_sup(f, acc.fmax)?;
    Ok(finish(&acc.m, d, mc, acc.dom))
}

fn finish(m: &Moments, d: usize, mc: &McSpec, dom: Tally) -> FkResult {
    let alive = m.mean()[2 * d + 1];
    let value = (0..d).map(|k| C64::new(m.mean()[2 * k], m.mean()[2 * k + 1])).collect();
    let stderr = (0..d).map(|k| (m.stderr(2 * k).powi(2) + m.stderr(2 * k + 1).powi(2)).sqrt()).collect();
    let n = m.count() as usize;
    let estimate = Estimate { value, stderr, n_samples: n, h: mc.h, seed: mc.seed, alive_fraction: alive };
    let floor = Estimate::real(m.mean()[2 * d], m.stderr(2 * d), n, mc.h, mc.seed, alive);
    FkResult { estimate, floor, domination: dom }
}

/// Scalar Feynman–Kac `E[e^{-∫v(B_s)ds} f(B_t) 1_{t<ζ}]`.
pub fn fk_scalar(model: &Manifold, v: &ScalarField, f: &Section, x: &Point, t: f64, mc: &McSpec) -> Result<FkResult> {
    let bundle = Bundle::trivial(1)?;
    let pot = Potential::scalar(v.clone(), 1, KatoClass::Kato, KatoClass::LocallyKato);
    fk_vector(&Problem::new(model, &bundle, &pot)?, f, x, t, mc)
}

/// Magnetic Feynman–Kac `E[e^{-∫v + i∫β(∘dB)} f(B_t) 1_{t<ζ}]`.
pub fn fk_magnetic(model: &Manifold, beta: &OneForm, v: &ScalarField, f: &Section, x: &Point, t: f64, mc: &McSpec) -> Result<FkResult> {
    let bundle = Bundle::magnetic(beta.clone());
    let pot = Potential::scalar(v.clone(), 1, KatoClass::Kato, KatoClass::LocallyKato);
    fk_vector(&Problem::new(model, &bundle, &pot)?, f, x, t, mc)
}

/// Per-path values at several checkpoints (shared paths), as complex
/// moments `[re, im]` per component and checkpoint.
pub fn fk_checkpoints(prob: &Problem, f: &Section, x: &Point, times: &[f64], mc: &McSpec) -> Result<Vec<FkResult>> {
    prob.check_section(f)?;
    mc.check()?;
    if times.is_empty() || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("t-grid", "times must be nondecreasing and nonempty"));
    }
    check_run(prob.model, x, *times.last().unwrap(), mc.h)?;
    let d = prob.rank();
    let p = times.len();
    let width = 2 * d + 2;
    let init = || (0..p).map(|_| FkAcc { m: Moments::new(width), dom: Tally::default(), fmax: 0.0 }).collect::<Vec<_>>();
    let accs = montecarlo::reduce(mc.n, mc.workers, init, |i, acc| {
        let snaps = trajectory(prob, x, times, None, mc.h, RngKey::new(mc.seed, i as u64))?;
        for (j, snap) in snaps.iter().enumerate() {
            let a = &mut acc[j];
            let mut row = vec![0.0; width];
            if snap.alive {
                let fy = f.eval(&snap.end);
                let fnorm = linalg::vec_norm(&fy);
                let v = apply_weight(&snap.weight, snap.transport.apply(&fy));
                for (k, z) in v.iter().enumerate() {
                    row[2 * k] = z.re;
                    row[2 * k + 1] = z.im;
                }
                row[2 * d] = snap.floor_weight() * fnorm;
                row[2 * d + 1] = 1.0;
                record_domination(&mut a.dom, i, linalg::vec_norm(&v), row[2 * d]);
                a.fmax = a.fmax.max(fnorm);
            } else {
                a.dom.count += 1;
            }
            a.m.push(&row);
        }
        Ok(())
    })?;
    accs.into_iter()
        .map(|a| {
            check_sup(f, a.fmax)?;
            Ok(finish(&a.m, d, mc, a.dom))
        })
        .collect()
}

/// Combined standard error of two independent estimates.
pub fn combined_stderr(a: f64, b: f64) -> f64 {
    (a * a + b * b).sqrt()
}
