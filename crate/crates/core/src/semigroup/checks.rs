//! Domination, semigroup identity, perturbation, continuity and
//! step-refinement checks.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{combined_stderr, fk_vector, trajectory, McSpec, Problem, Snapshot};
use crate::error::{Error, Result};
use crate::field::{KatoClass, Potential, ScalarField, Section};
use crate::geometry::{Manifold, Point};
use crate::holonomy::Weight;
use crate::kato::{khasminskii_constants, KhasminskiiConstants};
use crate::linalg::{self, CVector, C64};
use crate::montecarlo::{self, Estimate, Moments};
use crate::paths::check_run;
use crate::rng::{derive_seed, RngKey};

const OUTER_LABEL: u64 = 0x4f55_5445;

/// Largest relative rounding gap accepted where two estimators reduce to the
/// same samples.
pub const EXACT_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DominationReport {
    pub samples: u64,
    pub violations: u64,
    /// Largest relative excess `‖𝒱Pf‖/(e^{-∫v}|f|) − 1` seen on a path.
    pub max_excess: f64,
    pub first_violation: Option<usize>,
    /// `Q_t f(x)`.
    pub value: Estimate,
    /// `(e^{-tH(v)}|f|)(x)` for the scalar floor `v`.
    pub floor: Estimate,
    pub averaged_holds: bool,
    /// `Re⟨f(x), Q_t f(x)⟩` against `|f(x)| (e^{-tH(v)}|f|)(x)`.
    pub quadratic_lhs: f64,
    pub quadratic_rhs: f64,
    pub quadratic_holds: bool,
}

impl DominationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.averaged_holds && self.quadratic_holds
    }
}

/// Per-sample, averaged and quadratic-form versions of
/// `|Q_t f| ≤ e^{-tH(v)}|f|`.
pub fn domination_check(prob: &Problem, f: &Section, x: &Point, t: f64, mc: &McSpec) -> Result<DominationReport> {
    let r = fk_vector(prob, f, x, t, mc)?;
    let fx = f.eval(x);
    let fx_norm = linalg::vec_norm(&fx);
    let lhs_norm = r.estimate.norm();
    let averaged_holds = lhs_norm <= r.floor.re() + 3.0 * combined_stderr(r.estimate.norm_stderr(), r.floor.se());
    let quadratic_lhs = fx.iter().zip(&r.estimate.value).map(|(a, b)| a.conj() * b).sum::<C64>().re;
    let quadratic_rhs = fx_norm * r.floor.re();
    let quadratic_holds =
        quadratic_lhs <= quadratic_rhs + 3.0 * fx_norm * combined_stderr(r.estimate.norm_stderr(), r.floor.se());
    Ok(DominationReport {
        samples: r.domination.count,
        violations: r.domination.hits,
        max_excess: r.domination.max,
        first_violation: r.domination.first_hit,
        value: r.estimate,
        floor: r.floor,
        averaged_holds,
        quadratic_lhs,
        quadratic_rhs,
        quadratic_holds,
    })
}

fn split_budget(n: usize) -> Result<(usize, usize)> {
    // the outer average carries most of the variance and all of the error
    // estimate, so inner batches stay small
    let n_in = ((n as f64).powf(0.25).ceil() as usize).max(2);
    let n_out = n.div_ceil(n_in);
    if n < 4 {
        return Err(Error::invalid("n", "nested estimates need at least 4 paths"));
    }
    Ok((n_out, n_in))
}

fn snapshot_at(prob: &Problem, x: &Point, t: f64, h: f64, key: RngKey) -> Result<Snapshot> {
    Ok(trajectory(prob, x, &[t], None, h, key)?.pop().unwrap())
}

fn complex_row(v: &CVector) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn estimate_from(m: &Moments, alive: f64, mc: &McSpec) -> Estimate {
    Estimate::from_complex_moments(m, mc.h, mc.seed, alive)
}

/// `E_x[outer(B_s) applied to mean_j inner_j]`: outer paths of `outer` to
/// time `s` (streams `(derive_seed(seed), i)`), then `n_in` paths of `inner`
/// for time `tau` from each outer endpoint (streams `(seed, i·n_in + j)`).
#[allow(clippy::too_many_arguments)]
fn nested(
    outer: &Problem,
    inner: &Problem,
    f: &Section,
    x: &Point,
    s: f64,
    tau: f64,
    n_out: usize,
    n_in: usize,
    mc: &McSpec,
) -> Result<Estimate> {
    let d = inner.rank();
    let outer_seed = derive_seed(mc.seed, OUTER_LABEL);
    let (m, alive) = montecarlo::reduce(
        n_out,
        mc.workers,
        || (Moments::new(2 * d), Moments::new(1)),
        |i, (m, alive)| {
            let o = snapshot_at(outer, x, s, mc.h, RngKey::new(outer_seed, i as u64))?;
            alive.push(&[if o.alive { 1.0 } else { 0.0 }]);
            if !o.alive {
                m.push(&vec![0.0; 2 * d]);
                return Ok(());
            }
            let mut mean = CVector::zeros(d);
            for j in 0..n_in {
                let key = RngKey::new(mc.seed, (i * n_in + j) as u64);
                mean += snapshot_at(inner, &o.end, tau, mc.h, key)?.value(f);
            }
            mean /= C64::new(n_in as f64, 0.0);
            m.push(&complex_row(&o.carry(&mean)));
            Ok(())
        },
    )?;
    Ok(estimate_from(&m, alive.mean()[0], mc))
}

fn one_shot(prob: &Problem, f: &Section, x: &Point, t: f64, n: usize, mc: &McSpec) -> Result<Estimate> {
    let d = prob.rank();
    let (m, alive) = montecarlo::reduce(
        n,
        mc.workers,
        || (Moments::new(2 * d), Moments::new(1)),
        |k, (m, alive)| {
            let snap = snapshot_at(prob, x, t, mc.h, RngKey::new(mc.seed, k as u64))?;
            alive.push(&[if snap.alive { 1.0 } else { 0.0 }]);
            m.push(&complex_row(&snap.value(f)));
            Ok(())
        },
    )?;
    Ok(estimate_from(&m, alive.mean()[0], mc))
}

fn max_gap(a: &Estimate, b: &Estimate) -> f64 {
    a.value.iter().zip(&b.value).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
}

fn exact_match(a: &Estimate, b: &Estimate) -> bool {
    let scale = a.norm().max(b.norm()).max(1.0);
    max_gap(a, b) <= EXACT_TOL * scale
}

#[derive(Clone, Debug)]
pub struct IdentityReport {
    pub s: f64,
    pub t: f64,
    /// `Q_{s+t} f(x)` from `n_outer·n_inner` single paths.
    pub one_shot: Estimate,
    /// `Q_s Q_t f(x)` from nested paths.
    pub nested: Estimate,
    pub n_outer: usize,
    pub n_inner: usize,
    pub within_error: bool,
    /// For `s = 0` both sides use the same samples and must match to rounding.
    pub exact: Option<bool>,
}

impl IdentityReport {
    pub fn passed(&self) -> bool {
        self.within_error && self.exact.unwrap_or(true)
    }
}

/// `Q_{s+t} f = Q_s Q_t f` with a `√N × √N` nested budget.
pub fn identity_check(prob: &Problem, f: &Section, x: &Point, s: f64, t: f64, mc: &McSpec) -> Result<IdentityReport> {
    prob.check_section(f)?;
    mc.check()?;
    if !prob.model.is_complete() {
        return Err(Error::invalid("manifold", "the semigroup identity check runs on complete models"));
    }
    if !(s >= 0.0 && t >= 0.0) {
        return Err(Error::invalid("s", "times must be nonnegative"));
    }
    check_run(prob.model, x, s + t, mc.h)?;
    let (n_out, n_in) = split_budget(mc.n)?;
    let one = one_shot(prob, f, x, s + t, n_out * n_in, mc)?;
    let nest = nested(prob, prob, f, x, s, t, n_out, n_in, mc)?;
    let within_error = one.agrees_with(&nest, 3.0);
    let exact = (s == 0.0).then(|| exact_match(&one, &nest));
    Ok(IdentityReport { s, t, one_shot: one, nested: nest, n_outer: n_out, n_inner: n_in, within_error, exact })
}

#[derive(Clone, Debug)]
pub struct PerturbationReport {
    pub s: f64,
    pub t: f64,
    /// `e^{-sH₀} e^{-(t−s)H(V)} f(x)`.
    pub left: Estimate,
    /// `E[𝒱_s⁻¹𝒱_t P_t f(B_t)]`.
    pub right: Estimate,
    pub within_error: bool,
    /// Samples above `e^{∫‖V⁽²⁾‖}‖f‖_∞` on the right side.
    pub bound_violations: u64,
    pub bound_checked: bool,
    /// Degenerate endpoints: `s = 0` compares against the nested side,
    /// `s = t` against the free flow on the same paths.
    pub exact: Option<bool>,
}

impl PerturbationReport {
    pub fn passed(&self) -> bool {
        self.within_error && self.bound_violations == 0 && self.exact.unwrap_or(true)
    }
}

/// The perturbation identity: the free flow for time `s` followed by the
/// full flow for `t − s` equals the single-path expectation of
/// `𝒱_s⁻¹𝒱_t P_t f(B_t)`.
pub fn perturbation_check(prob: &Problem, f: &Section, x: &Point, s: f64, t: f64, mc: &McSpec) -> Result<PerturbationReport> {
    prob.check_section(f)?;
    mc.check()?;
    if !prob.model.is_complete() {
        return Err(Error::invalid("manifold", "the perturbation check runs on complete models"));
    }
    if !(0.0..=t).contains(&s) {
        return Err(Error::invalid("s", format!("need 0 ≤ s ≤ t, got s = {s}, t = {t}")));
    }
    check_run(prob.model, x, t, mc.h)?;
    let d = prob.rank();
    let zero = Potential::zero(d);
    let free = Problem { model: prob.model, bundle: prob.bundle, potential: &zero };
    let (n_out, n_in) = split_budget(mc.n)?;
    let n = n_out * n_in;
    let stops: Vec<f64> = if s == t { vec![t] } else { vec![s, t] };
    let sup = f.sup_norm();
    let (m, free_m, viol) = montecarlo::reduce(
        n,
        mc.workers,
        || (Moments::new(2 * d), Moments::new(2 * d), crate::montecarlo::Tally::default()),
        |k, (m, fm, viol)| {
            let snap = trajectory(prob, x, &stops, Some(0), mc.h, RngKey::new(mc.seed, k as u64))?.pop().unwrap();
            let v = snap.restarted_value(f);
            if let (Some(sup), Some((_, neg))) = (sup, &snap.restarted) {
                viol.count += 1;
                if linalg::vec_norm(&v) > neg.exp() * sup * (1.0 + super::DOMINATION_TOL) {
                    viol.hits += 1;
                }
            }
            m.push(&complex_row(&v));
            fm.push(&complex_row(&snap.free_value(f)));
            Ok(())
        },
    )?;
    let right = estimate_from(&m, 1.0, mc);
    let left = nested(&free, prob, f, x, s, t - s, n_out, n_in, mc)?;
    let exact = if s == 0.0 {
        Some(exact_match(&left, &right))
    } else if s == t {
        Some(right.value == estimate_from(&free_m, 1.0, mc).value)
    } else {
        None
    };
    Ok(PerturbationReport {
        s,
        t,
        within_error: left.agrees_with(&right, 3.0),
        left,
        right,
        bound_violations: viol.hits,
        bound_checked: sup.is_some(),
        exact,
    })
}

/// Largest refinement-to-coarse modulus ratio accepted (factor 2 around the
/// expected 2).
pub const MODULUS_RATIO: (f64, f64) = (1.0, 4.0);

#[derive(Clone, Debug)]
pub struct ContinuitySample {
    pub s: f64,
    pub h: f64,
    /// `sup_{x∈K} E‖I − 𝒱ˣ_s‖²`.
    pub sup: f64,
    pub stderr: f64,
    pub argmax: usize,
}

#[derive(Clone, Debug)]
pub struct ModulusCheck {
    /// Largest `‖Q_t f(x_j) − Q_t f(x_{j+1})‖` on the coarse and refined grids.
    pub coarse: f64,
    pub fine: f64,
    pub ratio: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct SupBoundCheck {
    /// `sup_K ‖Q_t f‖` and its standard error at the maximiser.
    pub sup: f64,
    pub stderr: f64,
    /// `(2e^{C t} C_t)^{1/2} ‖f‖₂` with `C = C_{2|V⁽²⁾|}`.
    pub bound: f64,
    pub khasminskii: KhasminskiiConstants,
    pub c_t: f64,
    pub holds: bool,
}

#[derive(Clone, Debug)]
pub struct ContinuityReport {
    pub samples: Vec<ContinuitySample>,
    pub monotone: bool,
    /// `sup E‖I − 𝒱_s‖² < 0.05` at the smallest `s`.
    pub small: bool,
    pub modulus: Option<ModulusCheck>,
    pub bound: SupBoundCheck,
}

impl ContinuityReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.small && self.modulus.as_ref().is_none_or(|m| m.holds) && self.bound.holds
    }
}

/// Threshold on `sup E‖I − 𝒱_s‖²` at the smallest scanned `s`.
pub const CONTINUITY_THRESHOLD: f64 = 0.05;

/// Points along the geodesic from `a` to `b`, endpoints included.
pub fn segment_grid(model: &Manifold, a: &Point, b: &Point, n: usize) -> Result<Vec<Point>> {
    if n < 2 {
        return Err(Error::invalid("x-grid", "a segment grid needs at least 2 points"));
    }
    Ok((0..n).map(|j| model.geodesic_point(a, b, j as f64 / (n - 1) as f64)).collect())
}

fn weight_defect(w: &Weight) -> f64 {
    match w {
        Weight::Scalar { log, .. } => (1.0 - log.exp()).powi(2),
        Weight::Matrix(m) => linalg::op_norm(&(linalg::identity(m.nrows()) - m)).powi(2),
    }
}

/// Flow values `Q_t f(x)` on a grid with common random numbers.
fn flow_on_grid(prob: &Problem, f: &Section, grid: &[Point], t: f64, mc: &McSpec) -> Result<Vec<Estimate>> {
    grid.iter().map(|x| Ok(fk_vector(prob, f, x, t, mc)?.estimate)).collect()
}

/// Strong continuity of `𝒱` at `s → 0` uniformly on `K`, Lipschitz-type
/// continuity of `x ↦ Q_t f(x)` and the sup-norm bound
/// `‖Q_t f‖_∞ ≤ (2e^{Ct}C_t)^{1/2}‖f‖₂`.
#[allow(clippy::too_many_arguments)]
pub fn continuity_scan(
    prob: &Problem,
    f: &Section,
    t: f64,
    grid: &[Point],
    refined: Option<&[Point]>,
    s_grid: &[f64],
    steps_per_s: usize,
    mc: &McSpec,
) -> Result<ContinuityReport> {
    prob.check_section(f)?;
    mc.check()?;
    if prob.potential.negative_class() > KatoClass::Kato {
        return Err(Error::invalid("potential", "negative part must be Kato class"));
    }
    if prob.potential.positive_class() > KatoClass::LocallyKato {
        return Err(Error::invalid("potential", "positive part must be locally Kato"));
    }
    if !prob.model.is_complete() {
        return Err(Error::invalid("manifold", "continuity scans run on complete models"));
    }
    if grid.len() < 32 {
        return Err(Error::invalid("x-grid", format!("need at least 32 grid points, got {}", grid.len())));
    }
    if s_grid.is_empty() || s_grid.windows(2).any(|w| w[1] >= w[0]) || *s_grid.last().unwrap() <= 0.0 {
        return Err(Error::invalid("s-grid", "scan times must be positive and decreasing"));
    }
    let l2 = f.l2_norm().ok_or_else(|| Error::invalid("f", "the sup bound needs a declared L2 norm of f"))?;
    for x in grid {
        check_run(prob.model, x, t, mc.h)?;
    }
    let mut samples = Vec::new();
    for &s in s_grid {
        let h = mc.h.min(s / steps_per_s.max(1) as f64);
        let mut best = ContinuitySample { s, h, sup: -1.0, stderr: 0.0, argmax: 0 };
        for (j, x) in grid.iter().enumerate() {
            let m = montecarlo::reduce(mc.n, mc.workers, || Moments::new(1), |i, m| {
                let snap = snapshot_at(prob, x, s, h, RngKey::new(mc.seed, i as u64))?;
                m.push(&[weight_defect(&snap.weight)]);
                Ok(())
            })?;
            if m.mean()[0] > best.sup {
                best = ContinuitySample { s, h, sup: m.mean()[0], stderr: m.stderr(0), argmax: j };
            }
        }
        samples.push(best);
    }
    let monotone = samples.windows(2).all(|w| w[1].sup <= w[0].sup + 3.0 * combined_stderr(w[0].stderr, w[1].stderr));
    let small = samples.last().unwrap().sup < CONTINUITY_THRESHOLD;

    let coarse = flow_on_grid(prob, f, grid, t, mc)?;
    let modulus_of = |vals: &[Estimate]| {
        vals.windows(2).map(|w| max_gap(&w[0], &w[1])).fold(0.0, f64::max)
    };
    let modulus = match refined {
        Some(fine_grid) => {
            for x in fine_grid {
                check_run(prob.model, x, t, mc.h)?;
            }
            let fine = flow_on_grid(prob, f, fine_grid, t, mc)?;
            let (c, fm) = (modulus_of(&coarse), modulus_of(&fine));
            let ratio = if fm > 0.0 { c / fm } else { f64::INFINITY };
            Some(ModulusCheck { coarse: c, fine: fm, ratio, holds: (MODULUS_RATIO.0..=MODULUS_RATIO.1).contains(&ratio) })
        }
        None => None,
    };

    let top = coarse.iter().max_by(|a, b| a.norm().total_cmp(&b.norm())).unwrap();
    let w = prob.potential.negative_norm_field().scaled(2.0);
    let k = khasminskii_constants(prob.model, &w, grid, t.max(1e-3))?;
    let c_t = prob.model.base().sup_heat_kernel(t)?;
    let bound = (k.bound(t) * c_t).sqrt() * l2;
    let bound = SupBoundCheck {
        sup: top.norm(),
        stderr: top.norm_stderr(),
        bound,
        holds: top.norm() <= bound + 3.0 * top.norm_stderr(),
        khasminskii: k,
        c_t,
    };
    Ok(ContinuityReport { samples, monotone, small, modulus, bound })
}

#[derive(Clone, Debug)]
pub struct HRefinementReport {
    pub hs: Vec<f64>,
    pub h_ref: f64,
    /// Estimated bias `E[Y_h − Y_ref]` per step size.
    pub bias: Vec<f64>,
    pub bias_stderr: Vec<f64>,
    pub reference: Estimate,
    /// `|bias|` does not grow under refinement beyond 3 standard errors.
    pub monotone: bool,
    /// The reference agrees with `exact` within 3 standard errors, if given.
    pub reference_agrees: Option<bool>,
}

impl HRefinementReport {
    pub fn passed(&self) -> bool {
        self.monotone && self.reference_agrees.unwrap_or(true)
    }
}

/// Bias of the trapezoid weight `e^{-∫v}` under step refinement on `R^m`.
/// All step sizes read one Brownian path sampled at `h_ref`, so the
/// differences against the reference are paired.
#[allow(clippy::too_many_arguments)]
pub fn h_refinement(
    model: &Manifold,
    v: &ScalarField,
    f: &Section,
    x: &Point,
    t: f64,
    hs: &[f64],
    h_ref: f64,
    exact: Option<f64>,
    mc: &McSpec,
) -> Result<HRefinementReport> {
    let Manifold::Euclidean { .. } = model else {
        return Err(Error::invalid("manifold", "step refinement runs on Euclidean models"));
    };
    if v.is_singular() {
        return Err(Error::invalid("potential", "step refinement needs a regular potential"));
    }
    if f.rank() != 1 {
        return Err(Error::invalid("f", "step refinement uses a scalar function"));
    }
    mc.check()?;
    check_run(model, x, t, h_ref)?;
    let steps = (t / h_ref).round() as usize;
    if steps == 0 || ((steps as f64) * h_ref - t).abs() > 1e-9 * t {
        return Err(Error::invalid("h", "reference step must divide t"));
    }
    if hs.is_empty() || hs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("h", "step sizes must be decreasing"));
    }
    let mut strides = Vec::with_capacity(hs.len());
    for &h in hs {
        let r = (h / h_ref).round() as usize;
        if r == 0 || (r as f64 * h_ref - h).abs() > 1e-9 * h || !steps.is_multiple_of(r) {
            return Err(Error::invalid("h", format!("step {h} is not a multiple of {h_ref} dividing t")));
        }
        strides.push(r);
    }
    let q = hs.len();
    let sq = h_ref.sqrt();
    let m = montecarlo::reduce(mc.n, mc.workers, || Moments::new(q + 1), |i, acc| {
        let mut rng = RngKey::new(mc.seed, i as u64).rng();
        let mut y: Vec<f64> = x.coords().to_vec();
        let mut vals = Vec::with_capacity(steps + 1);
        vals.push(v.eval(x));
        for _ in 0..steps {
            for c in y.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *c += sq * z;
            }
            vals.push(v.eval(&Point::intrinsic(&y)));
        }
        let fy = f.eval(&Point::intrinsic(&y))[0].re;
        let trap = |r: usize| {
            let h = r as f64 * h_ref;
            let mut s = 0.5 * (vals[0] + vals[steps]);
            for k in (r..steps).step_by(r) {
                s += vals[k];
            }
            s * h
        };
        let y_ref = (-trap(1)).exp() * fy;
        let mut row = Vec::with_capacity(q + 1);
        row.push(y_ref);
        for &r in &strides {
            row.push((-trap(r)).exp() * fy - y_ref);
        }
        acc.push(&row);
        Ok(())
    })?;
    let bias: Vec<f64> = (1..=q).map(|j| m.mean()[j]).collect();
    let bias_stderr: Vec<f64> = (1..=q).map(|j| m.stderr(j)).collect();
    let monotone = (1..q).all(|j| bias[j].abs() <= bias[j - 1].abs() + 3.0 * combined_stderr(bias_stderr[j], bias_stderr[j - 1]));
    let reference = Estimate::real(m.mean()[0], m.stderr(0), m.count() as usize, h_ref, mc.seed, 1.0);
    let reference_agrees = exact.map(|e| (reference.re() - e).abs() <= 3.0 * reference.se());
    Ok(HRefinementReport { hs: hs.to_vec(), h_ref, bias, bias_stderr, reference, monotone, reference_agrees })
}
