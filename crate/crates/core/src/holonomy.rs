//! The potential holonomy: the pathwise matrix ODE
//! `d𝒱 = −𝒱 (//⁻¹ V //) dt`, `𝒱_0 = 1`, solved by a symmetric exponential
//! product.
//!
//! Over a step `[t_k, t_{k+1}]` the frame field is frozen at
//! `W̄_k = (W_k + W_{k+1})/2` with `W_k = P_k V(x_k) P_k*`, and
//! `𝒱_{k+1} = 𝒱_k exp(−dt W̄_k)`. Every factor is the exponential of a
//! Hermitian matrix, so the norm bounds for the ODE hold exactly at each grid
//! point, and the scheme is second order on smooth paths. Potentials with
//! declared singular points average `V` over the step instead, with each
//! sample's spectrum clamped to `[−1/h, 1/h]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::Transport;
use crate::error::{Error, Result};
use crate::field::Potential;
use crate::geometry::{Manifold, Point};
use crate::linalg::{self, CMatrix, C64};
use crate::paths::{PathSample, ScalarIntegrator, SINGULAR_SUBSTEPS};
use crate::rng::derive_seed;

/// Step-averaged frame field of one step.
#[derive(Clone, Debug)]
pub enum FieldValue {
    /// `v̄·I` (scalar potentials).
    Scalar(f64),
    Matrix(CMatrix),
}

/// What one step contributes: the averaged field, and the matching averages
/// of the scalar floor and of `‖V⁽²⁾‖` (already multiplied by `dt`).
#[derive(Clone, Debug)]
pub struct StepField {
    pub field: FieldValue,
    pub dt: f64,
    pub floor_integral: f64,
    pub negative_integral: f64,
}

/// Computes [`StepField`]s along a path, one step at a time.
pub struct HolonomyStepper<'a> {
    potential: &'a Potential,
    cap: f64,
    scalar: Option<ScalarIntegrator<'a>>,
    prev: Option<(CMatrix, f64, f64)>,
}

impl<'a> HolonomyStepper<'a> {
    /// `start` is the first path point, seen through the identity transport.
    pub fn new(potential: &'a Potential, h: f64, start: &Point) -> Result<Self> {
        if potential.rank() > linalg::MAX_RANK {
            return Err(Error::UnsupportedRank(potential.rank()));
        }
        let cap = 1.0 / h;
        if let Some(v) = potential.as_scalar() {
            return Ok(HolonomyStepper {
                potential,
                cap,
                scalar: Some(ScalarIntegrator::new(v, h, start)?),
                prev: None,
            });
        }
        let prev = if potential.is_singular() { None } else { Some(sample(potential, start, 0)?) };
        Ok(HolonomyStepper { potential, cap, scalar: None, prev })
    }

    /// Field for the step `from → to`; `before` and `after` are the
    /// accumulated transports at the two ends.
    pub fn step(
        &mut self,
        model: &Manifold,
        from: &Point,
        to: &Point,
        before: &Transport,
        after: &Transport,
        dt: f64,
        k: usize,
    ) -> Result<StepField> {
        if let Some(integ) = self.scalar.as_mut() {
            let v = integ.step(model, from, to, dt, k)?;
            let mean = if dt > 0.0 { v / dt } else { 0.0 };
            return Ok(StepField { field: FieldValue::Scalar(mean), dt, floor_integral: v, negative_integral: (-v).max(0.0) });
        }
        if self.potential.is_singular() {
            let mut acc = CMatrix::zeros(self.potential.rank(), self.potential.rank());
            let mut floor = 0.0;
            let mut neg = 0.0;
            for j in 0..SINGULAR_SUBSTEPS {
                let s = (j as f64 + 0.5) / SINGULAR_SUBSTEPS as f64;
                let p = model.geodesic_point(from, to, s);
                let (v, f, n) = sample(self.potential, &p, k)?;
                let cap = self.cap;
                acc += linalg::spectral_map(&v, |x| x.clamp(-cap, cap));
                floor += f.clamp(-cap, cap);
                neg += n.min(cap);
            }
            let q = 1.0 / SINGULAR_SUBSTEPS as f64;
            acc *= C64::new(q, 0.0);
            let w = (before.conjugate(&acc) + after.conjugate(&acc)) * C64::new(0.5, 0.0);
            return Ok(StepField { field: FieldValue::Matrix(w), dt, floor_integral: dt * floor * q, negative_integral: dt * neg * q });
        }
        let (v, f, n) = sample(self.potential, to, k + 1)?;
        let w_next = after.conjugate(&v);
        let (w_prev, f_prev, n_prev) = self.prev.take().expect("regular stepper keeps the previous sample");
        let w = (&w_prev + &w_next) * C64::new(0.5, 0.0);
        self.prev = Some((w_next, f, n));
        Ok(StepField {
            field: FieldValue::Matrix(w),
            dt,
            floor_integral: 0.5 * dt * (f_prev + f),
            negative_integral: 0.5 * dt * (n_prev + n),
        })
    }
}

fn sample(potential: &Potential, x: &Point, k: usize) -> Result<(CMatrix, f64, f64)> {
    let v = potential.value(x);
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { what: format!("potential {} at {x}", potential.description()), step: k });
    }
    Ok((v, potential.scalar_floor(x), potential.negative_norm(x)))
}

/// Running value of `𝒱`, kept as a log-weight for scalar potentials.
#[derive(Clone, Debug)]
pub enum Weight {
    Scalar { log: f64, rank: usize },
    Matrix(CMatrix),
}

impl Weight {
    pub fn identity(rank: usize) -> Weight {
        Weight::Scalar { log: 0.0, rank }
    }

    /// `𝒱 ← 𝒱 exp(−dt W̄)`.
    pub fn advance(&mut self, step: &StepField) {
        match (&mut *self, &step.field) {
            (Weight::Scalar { log, .. }, FieldValue::Scalar(v)) => *log -= step.dt * v,
            (Weight::Matrix(m), FieldValue::Scalar(v)) => *m *= C64::new((-step.dt * v).exp(), 0.0),
            (Weight::Scalar { log, .. }, FieldValue::Matrix(w)) => {
                let e = linalg::exp_neg_hermitian(w, step.dt) * C64::new(log.exp(), 0.0);
                *self = Weight::Matrix(e);
            }
            (Weight::Matrix(m), FieldValue::Matrix(w)) => *m = &*m * linalg::exp_neg_hermitian(w, step.dt),
        }
    }

    pub fn matrix(&self) -> CMatrix {
        match self {
            Weight::Scalar { log, rank } => linalg::identity(*rank) * C64::new(log.exp(), 0.0),
            Weight::Matrix(m) => m.clone(),
        }
    }

    pub fn norm(&self) -> f64 {
        match self {
            Weight::Scalar { log, .. } => log.exp(),
            Weight::Matrix(m) => linalg::op_norm(m),
        }
    }
}

/// `𝒱` along a materialised path.
#[derive(Clone, Debug)]
pub struct HolonomyTrace {
    pub times: Vec<f64>,
    /// `𝒱_{t_k}`, `k = 0..=K`.
    pub values: Vec<CMatrix>,
    /// `𝒱_{t_k}⁻¹`.
    pub inverses: Vec<CMatrix>,
    /// Step-averaged frame fields `W̄_k` (Hermitian), `k = 0..K`.
    pub frame_fields: Vec<CMatrix>,
    /// Cumulative `Σ_{j<k} dt_j·v̄_j` of the scalar floor.
    pub floor_integral: Vec<f64>,
    /// Cumulative `Σ_{j<k} dt_j·‖V⁽²⁾‖̄_j`.
    pub negative_integral: Vec<f64>,
}

impl HolonomyTrace {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn endpoint(&self) -> &CMatrix {
        self.values.last().expect("a trace has at least its initial value")
    }

    pub fn dts(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// `Σ_k dt_k ‖W̄_k‖`, the `L¹` norm of the piecewise-constant generator.
    pub fn generator_l1(&self) -> f64 {
        self.dts().iter().zip(&self.frame_fields).map(|(dt, w)| dt * linalg::op_norm(w)).sum()
    }
}

/// Solve the holonomy ODE along `path` for the potential `v`.
pub fn evolve_holonomy(model: &Manifold, path: &PathSample, v: &Potential) -> Result<HolonomyTrace> {
    let d = v.rank();
    if d > linalg::MAX_RANK {
        return Err(Error::UnsupportedRank(d));
    }
    let rank = path.transports.first().map_or(d, |t| t.nrows());
    if rank != d {
        return Err(Error::invalid("V", format!("potential rank {d} does not match bundle rank {rank}")));
    }
    let mut stepper = HolonomyStepper::new(v, path.h, &path.points[0])?;
    let mut before = Transport::Matrix(linalg::identity(d));
    let mut value = linalg::identity(d);
    let mut inverse = linalg::identity(d);
    let mut trace = HolonomyTrace {
        times: path.times.clone(),
        values: vec![value.clone()],
        inverses: vec![inverse.clone()],
        frame_fields: Vec::with_capacity(path.transports.len()),
        floor_integral: vec![0.0],
        negative_integral: vec![0.0],
    };
    for (k, t) in path.transports.iter().enumerate() {
        let after = match &before {
            Transport::Matrix(p) => Transport::Matrix(p * t),
            _ => unreachable!(),
        };
        let dt = path.times[k + 1] - path.times[k];
        let step = stepper.step(model, &path.points[k], &path.points[k + 1], &before, &after, dt, k)?;
        let w = match &step.field {
            FieldValue::Scalar(s) => linalg::identity(d) * C64::new(*s, 0.0),
            FieldValue::Matrix(w) => w.clone(),
        };
        value = &value * linalg::exp_neg_hermitian(&w, dt);
        inverse = linalg::exp_neg_hermitian(&w, -dt) * &inverse;
        trace.values.push(value.clone());
        trace.inverses.push(inverse.clone());
        trace.frame_fields.push(w);
        trace.floor_integral.push(trace.floor_integral[k] + step.floor_integral);
        trace.negative_integral.push(trace.negative_integral[k] + step.negative_integral);
        before = after;
    }
    Ok(trace)
}

/// Largest allowed `Σ dt‖W̄‖` for the truncated Dyson series.
pub const TRUNCATION_GUARD: f64 = 5.0;

/// Dyson series of the trace's piecewise-constant generator `F = −W̄`,
/// truncated after `order` terms.
///
/// The iterated integrals `I_n = ∫_{s₁≤…≤s_n} F(s₁)⋯F(s_n)` are exact for a
/// piecewise-constant `F`: crossing a step with `A = dt·F_k` maps
/// `I_n ← Σ_{i≤n} I_i A^{n−i}/(n−i)!`.
pub fn product_integral_truncation(trace: &HolonomyTrace, order: usize) -> Result<CMatrix> {
    if order > 6 {
        return Err(Error::invalid("order", format!("order must be at most 6, got {order}")));
    }
    let l1 = trace.generator_l1();
    if l1 > TRUNCATION_GUARD {
        return Err(Error::invalid(
            "order",
            format!("generator L1 norm {l1:.3} exceeds {TRUNCATION_GUARD}; the truncated series is meaningless"),
        ));
    }
    let d = trace.values[0].nrows();
    let mut terms: Vec<CMatrix> = (0..=order).map(|n| if n == 0 { linalg::identity(d) } else { CMatrix::zeros(d, d) }).collect();
    for (dt, w) in trace.dts().iter().zip(&trace.frame_fields) {
        let a = w * C64::new(-dt, 0.0);
        // powers A^j / j!
        let mut pows = vec![linalg::identity(d)];
        for j in 1..=order {
            let next = &pows[j - 1] * &a * C64::new(1.0 / j as f64, 0.0);
            pows.push(next);
        }
        for n in (1..=order).rev() {
            let mut acc = CMatrix::zeros(d, d);
            for i in 0..=n {
                acc += &terms[i] * &pows[n - i];
            }
            terms[n] = acc;
        }
    }
    Ok(terms.into_iter().fold(CMatrix::zeros(d, d), |s, t| s + t))
}

/// One checked inequality.
#[derive(Clone, Debug)]
pub struct Check {
    pub name: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
}

impl Check {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + INEQUALITY_SLACK
    }
}

pub const INEQUALITY_SLACK: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct InequalityReport {
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
}

impl InequalityReport {
    pub fn violations(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.holds()).collect()
    }
}

/// A grid-sampled generator on `[0, t]`, frozen on each of its cells.
#[derive(Clone, Debug)]
pub struct GridGenerator {
    pub dts: Vec<f64>,
    pub values: Vec<CMatrix>,
}

impl GridGenerator {
    pub fn zero(d: usize, t: f64, steps: usize) -> Self {
        GridGenerator { dts: vec![t / steps as f64; steps], values: vec![CMatrix::zeros(d, d); steps] }
    }

    /// Smooth random generator: `A + B sin(ωs) + C cos(ω's)` sampled at cell
    /// midpoints, with Hermitian or general complex coefficients.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize, t: f64, steps: usize, hermitian: bool) -> Self {
        let scale = rng.random_range(0.1..2.0);
        let draw = |rng: &mut R| {
            if hermitian {
                linalg::random_hermitian(rng, d, scale)
            } else {
                linalg::random_complex(rng, d, scale)
            }
        };
        let (a, b, c) = (draw(rng), draw(rng), draw(rng));
        let w1 = rng.random_range(0.5..8.0);
        let w2 = rng.random_range(0.5..8.0);
        let dt = t / steps as f64;
        let values = (0..steps)
            .map(|k| {
                let s = (k as f64 + 0.5) * dt;
                &a + &b * C64::new((w1 * s).sin(), 0.0) + &c * C64::new((w2 * s).cos(), 0.0)
            })
            .collect();
        GridGenerator { dts: vec![dt; steps], values }
    }

    /// `∫‖F‖`.
    pub fn l1(&self) -> f64 {
        self.dts.iter().zip(&self.values).map(|(dt, f)| dt * linalg::op_norm(f)).sum()
    }

    /// `Y(t_k)` for `dY/ds = Y F`, `Y(0) = 1`, `k = 0..=K`.
    pub fn solve(&self) -> Vec<CMatrix> {
        let d = self.values.first().map_or(1, |f| f.nrows());
        let mut y = linalg::identity(d);
        let mut out = vec![y.clone()];
        for (dt, f) in self.dts.iter().zip(&self.values) {
            y = &y * linalg::expm(&(f * C64::new(*dt, 0.0)));
            out.push(y.clone());
        }
        out
    }
}

/// Check the norm bounds for `dY/ds = Y F` on random generators: growth
/// bounds for general `F`, the quadratic-form bounds for Hermitian `F`,
/// the stability estimate between two solutions, and the Hölder-type bound
/// on `Y − 1` for `p ∈ {1, 2, 4}`.
pub fn inequality_suite(trials: usize, d: usize, t: f64, steps: usize, seed: u64) -> Result<InequalityReport> {
    if d == 0 || d > linalg::MAX_RANK {
        return Err(Error::UnsupportedRank(d));
    }
    if !(t > 0.0) || steps == 0 {
        return Err(Error::invalid("t", "need t > 0 and at least one step"));
    }
    let mut checks = Vec::new();
    for trial in 0..trials {
        let tseed = derive_seed(seed, trial as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(tseed);
        let f1 = GridGenerator::random(&mut rng, d, t, steps, false);
        let f2 = GridGenerator::random(&mut rng, d, t, steps, false);
        checks.extend(check_generator(&f1, Some(&f2), trial, tseed));
        let herm = GridGenerator::random(&mut rng, d, t, steps, true);
        let k1 = rng.random_range(0..=steps);
        let k2 = rng.random_range(k1..=steps);
        checks.extend(check_hermitian(&herm, k1, k2, trial, tseed));
    }
    Ok(InequalityReport { trials, seed, checks })
}

/// Growth, stability and Hölder-type checks for one generator (and an
/// optional second one for the stability estimate).
pub fn check_generator(f1: &GridGenerator, f2: Option<&GridGenerator>, trial: usize, seed: u64) -> Vec<Check> {
    let mk = |name, lhs, rhs| Check { name, trial, seed, lhs, rhs };
    let y1 = f1.solve();
    let end = y1.last().unwrap();
    let l1 = f1.l1();
    let d = end.nrows();
    let dist = linalg::op_norm(&(end - linalg::identity(d)));
    let mut out = vec![mk("norm_growth", linalg::op_norm(end), l1.exp()), mk("distance_from_identity", dist, l1.exp())];
    for p in [1.0, 2.0, 4.0] {
        let name = match p as u32 {
            1 => "holder_p1",
            2 => "holder_p2",
            _ => "holder_p4",
        };
        out.push(mk(name, dist, l1.powf(1.0 / p) * l1.exp()));
    }
    if let Some(f2) = f2 {
        let y2 = f2.solve();
        let diff: f64 = f1.dts.iter().zip(f1.values.iter().zip(&f2.values)).map(|(dt, (a, b))| dt * linalg::op_norm(&(a - b))).sum();
        let lhs = linalg::op_norm(&(end - y2.last().unwrap()));
        out.push(mk("stability", lhs, (2.0 * l1 + f2.l1()).exp() * diff));
    }
    out
}

/// Quadratic-form checks for a Hermitian generator with `c(s) = λmax(F(s))`:
/// `‖Y(t)‖ ≤ e^{∫c}` and `‖Y(t₁)⁻¹Y(t₂)‖ ≤ e^{∫_{t₁}^{t₂} c}` for grid
/// indices `k1 ≤ k2`.
pub fn check_hermitian(f: &GridGenerator, k1: usize, k2: usize, trial: usize, seed: u64) -> Vec<Check> {
    let mk = |name, lhs, rhs| Check { name, trial, seed, lhs, rhs };
    let c: Vec<f64> = f.values.iter().map(linalg::lambda_max).collect();
    let y = f.solve();
    let total: f64 = f.dts.iter().zip(&c).map(|(dt, c)| dt * c).sum();
    let partial: f64 = f.dts[k1..k2].iter().zip(&c[k1..k2]).map(|(dt, c)| dt * c).sum();
    // Y(t₁)⁻¹Y(t₂) is exactly the product of the step factors in between;
    // inverting Y(t₁) numerically would only add conditioning error
    let d = y[0].nrows();
    let between = f.dts[k1..k2]
        .iter()
        .zip(&f.values[k1..k2])
        .fold(linalg::identity(d), |acc, (dt, g)| acc * linalg::expm(&(g * C64::new(*dt, 0.0))));
    vec![
        mk("quadratic_form_growth", linalg::op_norm(y.last().unwrap()), total.exp()),
        mk("quadratic_form_interval", linalg::op_norm(&between), partial.exp()),
    ]
}

#[cfg(test)]
mod tests;
