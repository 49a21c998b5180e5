//! `L^p → L^q` norms of the heat semigroup on compact models and the
//! `L² → L^q` smoothing bound for `e^{-tH(V)}`.

use rand::Rng;
use rand_distr::StandardNormal;

use super::{trajectory, McSpec, Problem};
use crate::error::{Error, Result};
use crate::field::Section;
use crate::geometry::{Manifold, Point};
use crate::kato::{khasminskii_constants, KhasminskiiConstants};
use crate::linalg::{self, C64};
use crate::montecarlo::{self, Moments};
use crate::oracle::ZonalProbe;
use crate::paths::check_run;
use crate::rng::RngKey;

/// Agreement required between a quadrature norm and its closed form.
pub const HEAT_NORM_TOL: f64 = 1e-6;

/// One `‖P_t‖_{p→q}` evaluation; `f64::INFINITY` encodes `∞`.
#[derive(Clone, Debug)]
pub struct HeatNormCheck {
    pub p: f64,
    pub q: f64,
    /// From the heat kernel by quadrature.
    pub computed: f64,
    /// From the diagonal `p_t(x,x)`, `p_{2t}(x,x)`.
    pub reference: f64,
    /// `C_t^{1/p − 1/q}`.
    pub bound: f64,
}

impl HeatNormCheck {
    pub fn holds(&self) -> bool {
        (self.computed - self.reference).abs() <= HEAT_NORM_TOL && self.computed <= self.bound * (1.0 + 1e-12)
    }
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// `‖P_t‖_{p→q}` for `(p, q) ∈ {(1,∞), (1,2), (2,∞), (2,2)}` at the
/// origin of a compact homogeneous model.
pub fn heat_norms(model: &Manifold, t: f64, quad_n: usize) -> Result<Vec<HeatNormCheck>> {
    if !model.is_compact() {
        return Err(Error::invalid("manifold", "heat norms are evaluated on compact models"));
    }
    if !(t > 0.0) {
        return Err(Error::invalid("t", "need t > 0"));
    }
    let o = model.origin();
    let rule = model.volume_rule(quad_n)?;
    let c_t = model.heat_kernel(t, &o, &o)?;
    let c_2t = model.heat_kernel(2.0 * t, &o, &o)?;
    let mut peak = c_t;
    let (mut mass, mut l2) = (0.0, 0.0);
    for (y, w) in &rule {
        let k = model.heat_kernel(t, &o, y)?;
        peak = peak.max(k);
        mass += w * k;
        l2 += w * k * k;
    }
    let cases = [
        (1.0, f64::INFINITY, peak, c_t),
        (1.0, 2.0, l2.sqrt(), c_2t.sqrt()),
        (2.0, f64::INFINITY, l2.sqrt(), c_2t.sqrt()),
        (2.0, 2.0, mass, 1.0),
    ];
    Ok(cases
        .iter()
        .map(|&(p, q, computed, reference)| HeatNormCheck {
            p,
            q,
            computed,
            reference,
            bound: c_t.powf(inv(p) - inv(q)),
        })
        .collect())
}

/// Random zonal combinations of spherical harmonics of degree `≤ 4`,
/// normalised to unit `L²` norm by quadrature.
pub fn random_zonal_probes(model: &Manifold, count: usize, seed: u64) -> Result<Vec<(ZonalProbe, Section)>> {
    let Manifold::Sphere2 { radius } = model else {
        return Err(Error::invalid("manifold", "zonal probes live on the sphere"));
    };
    let radius = *radius;
    let rule = model.volume_rule(32)?;
    let mut rng = RngKey::new(seed, 0).rng();
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let mut terms = Vec::new();
        for l in 0..=4usize {
            let c: f64 = rng.sample(StandardNormal);
            let u: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            terms.push((c, l, [u[0] / n, u[1] / n, u[2] / n]));
        }
        let probe = ZonalProbe { radius, terms };
        let norm2: f64 = rule.iter().map(|(y, w)| w * probe.eval(&unit(y, radius)).powi(2)).sum();
        let probe = probe.scaled(1.0 / norm2.sqrt());
        let p = probe.clone();
        let section = Section::real(format!("probe{k}"), move |y: &Point| p.eval(&unit(y, radius))).with_l2_norm(1.0);
        out.push((probe, section));
    }
    Ok(out)
}

fn unit(y: &Point, radius: f64) -> [f64; 3] {
    let c = y.coords();
    [c[0] / radius, c[1] / radius, c[2] / radius]
}

#[derive(Clone, Debug)]
pub struct ProbeResult {
    pub probe: usize,
    pub q: f64,
    /// `‖e^{-tH} f‖_q` on the quadrature grid.
    pub norm: f64,
    pub stderr: f64,
    /// `√2 C_t^{1/2−1/q} e^{tD} ‖f‖₂`.
    pub bound: f64,
}

impl ProbeResult {
    pub fn holds(&self) -> bool {
        self.norm <= self.bound + 3.0 * self.stderr
    }
}

#[derive(Clone, Debug)]
pub struct SmoothingReport {
    pub t: f64,
    pub c_t: f64,
    /// `D = C_{2|V⁽²⁾|}/2`.
    pub d: f64,
    pub khasminskii: KhasminskiiConstants,
    pub probes: Vec<ProbeResult>,
}

impl SmoothingReport {
    pub fn passed(&self) -> bool {
        self.probes.iter().all(ProbeResult::holds)
    }
}

/// `‖e^{-tH(V)}‖_{2→q} ≤ √2 C_t^{1/2−1/q} e^{tD}` tested on probe sections
/// with declared `L²` norms. `Q_t f` is estimated at the nodes of a volume
/// rule with common paths for all probes; `kato_grid` feeds the
/// Khas'minskii constant of `2|V⁽²⁾|`.
#[allow(clippy::too_many_arguments)]
pub fn smoothing_check(
    prob: &Problem,
    probes: &[Section],
    t: f64,
    qs: &[f64],
    quad_n: usize,
    kato_grid: &[Point],
    mc: &McSpec,
) -> Result<SmoothingReport> {
    if !prob.model.is_compact() {
        return Err(Error::invalid("manifold", "smoothing norms are integrated over compact models"));
    }
    if probes.is_empty() {
        return Err(Error::invalid("probes", "need at least one probe"));
    }
    if let Some(q) = qs.iter().find(|&&q| !(q >= 2.0)) {
        return Err(Error::invalid("q", format!("need q ≥ 2, got {q}")));
    }
    let d = prob.rank();
    let norms2 = probes
        .iter()
        .map(|f| {
            prob.check_section(f)?;
            f.l2_norm().ok_or_else(|| Error::invalid("f", format!("probe {} needs a declared L2 norm", f.name())))
        })
        .collect::<Result<Vec<f64>>>()?;
    let rule = prob.model.volume_rule(quad_n)?;
    let np = probes.len();
    let mut values = vec![Vec::with_capacity(rule.len()); np];
    let mut errs = vec![Vec::with_capacity(rule.len()); np];
    for (x, _) in &rule {
        check_run(prob.model, x, t, mc.h)?;
        let m = montecarlo::reduce(mc.n, mc.workers, || Moments::new(2 * d * np), |i, m| {
            let snap = trajectory(prob, x, &[t], None, mc.h, RngKey::new(mc.seed, i as u64))?.pop().unwrap();
            let mut row = Vec::with_capacity(2 * d * np);
            for f in probes {
                for z in snap.value(f).iter() {
                    row.push(z.re);
                    row.push(z.im);
                }
            }
            m.push(&row);
            Ok(())
        })?;
        for k in 0..np {
            let base = 2 * d * k;
            let v: Vec<C64> = (0..d).map(|c| C64::new(m.mean()[base + 2 * c], m.mean()[base + 2 * c + 1])).collect();
            let se = (0..2 * d).map(|c| m.stderr(base + c).powi(2)).sum::<f64>().sqrt();
            values[k].push(linalg::vec_norm(&linalg::CVector::from_vec(v)));
            errs[k].push(se);
        }
    }
    let w = prob.potential.negative_norm_field().scaled(2.0);
    let khas = khasminskii_constants(prob.model, &w, kato_grid, t.max(1e-3))?;
    let dconst = khas.cv / 2.0;
    let c_t = prob.model.sup_heat_kernel(t)?;
    let mut results = Vec::new();
    for k in 0..np {
        for &q in qs {
            let (norm, stderr) = grid_norm(&values[k], &errs[k], &rule, q);
            let bound = 2f64.sqrt() * c_t.powf(0.5 - inv(q)) * (t * dconst).exp() * norms2[k];
            results.push(ProbeResult { probe: k, q, norm, stderr, bound });
        }
    }
    Ok(SmoothingReport { t, c_t, d: dconst, khasminskii: khas, probes: results })
}

fn grid_norm(vals: &[f64], errs: &[f64], rule: &[(Point, f64)], q: f64) -> (f64, f64) {
    if q.is_infinite() {
        let (j, v) = vals.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        return (*v, errs[j]);
    }
    let s: f64 = vals.iter().zip(rule).map(|(v, (_, w))| w * v.powf(q)).sum();
    let norm = s.powf(1.0 / q);
    if norm == 0.0 {
        return (0.0, 0.0);
    }
    let grad: f64 = vals.iter().zip(errs).zip(rule).map(|((v, e), (_, w))| w * v.powf(q - 1.0) * e).sum();
    (norm, norm.powf(1.0 - q) * grad)
}
