//! Ground-state energy from the decay rate of `⟨f₁, e^{-tH} f₂⟩`.

use rand::Rng;

use super::{trajectory, McSpec, Problem};
use crate::error::{Error, Result};
use crate::field::Section;
use crate::geometry::{Manifold, Point};
use crate::linalg::{CVector, C64};
use crate::montecarlo::{self, Moments};
use crate::paths::check_run;
use crate::rng::{derive_seed, RngKey};

const START_LABEL: u64 = 0x5354_4152;
const MAX_REJECTIONS: usize = 1_000_000;

/// Draws start points with density proportional to a nonnegative `f₁`.
pub struct StartSampler<'a> {
    model: &'a Manifold,
    f1: &'a Section,
    bound: f64,
    /// Half-width of the proposal cube on noncompact Euclidean models.
    radius: f64,
    /// Volume of the proposal region.
    volume: f64,
}

impl<'a> StartSampler<'a> {
    pub fn new(model: &'a Manifold, f1: &'a Section, radius: f64) -> Result<Self> {
        if f1.rank() != 1 {
            return Err(Error::invalid("f1", "start density must be scalar"));
        }
        let bound = f1
            .sup_norm()
            .ok_or_else(|| Error::invalid("f1", "start density needs a declared sup bound for rejection sampling"))?;
        let volume = if model.base().is_compact() {
            model.base().volume().unwrap()
        } else if matches!(model.base(), Manifold::Euclidean { .. }) {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::invalid("radius", "proposal radius must be positive"));
            }
            (2.0 * radius).powi(model.dim() as i32)
        } else {
            return Err(Error::invalid("manifold", format!("no start sampler on {model}")));
        };
        Ok(StartSampler { model, f1, bound, radius, volume })
    }

    /// `∫ f₁` over the proposal region, up to Monte Carlo error of the
    /// acceptance rate; only the proportionality matters for energies.
    pub fn proposal_volume(&self) -> f64 {
        self.volume
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        let base = self.model.base();
        for _ in 0..MAX_REJECTIONS {
            let y = if base.is_compact() {
                base.uniform_point(rng)?
            } else {
                let c: Vec<f64> = (0..base.dim()).map(|_| (2.0 * rng.random::<f64>() - 1.0) * self.radius).collect();
                base.point(&c)?
            };
            if !self.model.contains(&y) {
                continue;
            }
            let w = self.f1.eval(&y)[0].re;
            if w < 0.0 {
                return Err(Error::invalid("f1", format!("start density is negative at {y}")));
            }
            if rng.random::<f64>() * self.bound < w {
                return Ok(y);
            }
        }
        Err(Error::Numerical("start density rejection sampler made no progress".into()))
    }
}

/// Decay-rate fit of the ground-state energy.
#[derive(Clone, Debug)]
pub struct GroundEnergyReport {
    pub energy: f64,
    pub stderr: f64,
    pub t_grid: Vec<f64>,
    /// `log Φ(t)` up to an additive constant.
    pub log_functional: Vec<f64>,
    pub log_stderr: Vec<f64>,
    /// `−Δ log Φ / Δt` between consecutive grid times.
    pub local_rates: Vec<f64>,
    /// Index of the first grid time used in the fit.
    pub fit_start: usize,
    pub alive_fraction: f64,
    pub n: usize,
    pub h: f64,
    pub seed: u64,
}

/// Estimate `𝓔(H)` as minus the slope of `log ⟨f₁, e^{-tH} f₂ u⟩` over the
/// second half of `t_grid`, with `u` the normalised all-ones fiber vector.
/// Start points are drawn from `f₁`; `radius` bounds the proposal cube on
/// Euclidean models.
pub fn ground_energy(prob: &Problem, f1: &Section, f2: &Section, radius: f64, t_grid: &[f64], mc: &McSpec) -> Result<GroundEnergyReport> {
    if t_grid.len() < 4 {
        return Err(Error::invalid("t-grid", "need at least 4 times"));
    }
    if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("t-grid", "times must be positive and increasing"));
    }
    if f2.rank() != 1 {
        return Err(Error::invalid("f2", "f2 must be a scalar function"));
    }
    if mc.n < 2 {
        return Err(Error::invalid("n", "need at least two paths"));
    }
    let sampler = StartSampler::new(prob.model, f1, radius)?;
    let mut probe = RngKey::new(derive_seed(mc.seed, START_LABEL), u64::MAX).rng();
    check_run(prob.model, &sampler.sample(&mut probe)?, *t_grid.last().unwrap(), mc.h)?;
    let d = prob.rank();
    let u = C64::new(1.0 / (d as f64).sqrt(), 0.0);
    let p = t_grid.len();
    let start_seed = derive_seed(mc.seed, START_LABEL);
    let acc = montecarlo::reduce(
        mc.n,
        mc.workers,
        || (Moments::with_covariance(p), Moments::new(1)),
        |i, (m, alive)| {
            let mut rng = RngKey::new(start_seed, i as u64).rng();
            let x = sampler.sample(&mut rng)?;
            let snaps = trajectory(prob, &x, t_grid, None, mc.h, RngKey::new(mc.seed, i as u64))?;
            let mut row = vec![0.0; p];
            for (j, s) in snaps.iter().enumerate() {
                if s.alive {
                    let g = f2.eval(&s.end)[0] * u;
                    let v = s.carry(&CVector::from_element(d, g));
                    row[j] = v.iter().map(|z| z * u).sum::<C64>().re;
                }
            }
            alive.push(&[if snaps[p - 1].alive { 1.0 } else { 0.0 }]);
            m.push(&row);
            Ok(())
        },
    )?;
    let (m, alive) = acc;
    let mu = m.mean();
    if mu.iter().all(|v| v.abs() < 1e-300) {
        return Err(Error::Numerical("every Feynman–Kac weight underflowed; use a smaller largest time".into()));
    }
    if let Some(j) = mu.iter().position(|v| *v <= 0.0) {
        return Err(Error::Numerical(format!("functional is not positive at t = {}; log-decay undefined", t_grid[j])));
    }
    let n = m.count() as f64;
    let log_functional: Vec<f64> = mu.iter().map(|v| v.ln()).collect();
    let log_stderr: Vec<f64> = (0..p).map(|j| m.stderr(j) / mu[j]).collect();
    let local_rates = t_grid
        .windows(2)
        .zip(log_functional.windows(2))
        .map(|(t, l)| -(l[1] - l[0]) / (t[1] - t[0]))
        .collect();
    let fit_start = p / 2;
    let idx: Vec<usize> = (fit_start..p).collect();
    let tbar = idx.iter().map(|&j| t_grid[j]).sum::<f64>() / idx.len() as f64;
    let sxx: f64 = idx.iter().map(|&j| (t_grid[j] - tbar).powi(2)).sum();
    let c: Vec<f64> = idx.iter().map(|&j| (t_grid[j] - tbar) / sxx).collect();
    let slope: f64 = idx.iter().zip(&c).map(|(&j, c)| c * log_functional[j]).sum();
    // delta method: Cov(log μ_i, log μ_j) = C_ij / (n μ_i μ_j)
    let mut var = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            var += c[a] * c[b] * m.covariance(i, j) / (n * mu[i] * mu[j]);
        }
    }
    Ok(GroundEnergyReport {
        energy: -slope,
        stderr: var.max(0.0).sqrt(),
        t_grid: t_grid.to_vec(),
        log_functional,
        log_stderr,
        local_rates,
        fit_start,
        alive_fraction: alive.mean()[0],
        n: mc.n,
        h: mc.h,
        seed: mc.seed,
    })
}
