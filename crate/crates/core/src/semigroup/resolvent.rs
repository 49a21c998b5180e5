//! Resolvent powers through the Laplace transform of the semigroup.

use super::{apply_weight, record_domination, trajectory, McSpec, Problem};
use crate::error::{Error, Result};
use crate::field::Section;
use crate::geometry::Point;
use crate::linalg::{self, C64};
use crate::montecarlo::{self, Estimate, Moments, Tally};
use crate::paths::check_run;
use crate::quad::gauss_laguerre;
use crate::rng::RngKey;

/// Default number of Laguerre nodes.
pub const LAGUERRE_NODES: usize = 8;

/// Share of the last node above which the Laplace tail counts as unresolved.
pub const TAIL_SHARE: f64 = 1e-2;

#[derive(Clone, Debug)]
pub struct ResolventReport {
    /// `(H + λ)^{-k} f (x)`.
    pub estimate: Estimate,
    /// The same transform of the scalar comparison semigroup on `|f|`.
    pub floor: Estimate,
    /// `(t_i, c_i)`: sample times and their weights (including `λ^{-k}/(k−1)!`).
    pub nodes: Vec<(f64, f64)>,
    /// Share of the last node in `Σ c_i ‖Q_{t_i} f‖`.
    pub tail_share: f64,
    /// The tail is unresolved, or `λ` does not exceed `−𝓔` for the given lower bound.
    pub diverging: bool,
    pub domination: Tally,
}

/// `(H + λ)^{-k} f(x) = (1/(k−1)!) ∫ t^{k−1} e^{-λt} e^{-tH} f(x) dt`, by
/// generalised Gauss–Laguerre in `u = λt`; all nodes share the same paths.
#[allow(clippy::too_many_arguments)]
pub fn resolvent_apply(
    prob: &Problem,
    f: &Section,
    x: &Point,
    k: u32,
    lambda: f64,
    nodes: usize,
    energy_lower_bound: Option<f64>,
    mc: &McSpec,
) -> Result<ResolventReport> {
    prob.check_section(f)?;
    mc.check()?;
    if k == 0 {
        return Err(Error::invalid("k", "resolvent power must be at least 1"));
    }
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid("lambda", format!("Laplace parameter must be positive, got {lambda}")));
    }
    if nodes == 0 {
        return Err(Error::invalid("nodes", "need at least one Laguerre node"));
    }
    let rule = gauss_laguerre(nodes, k as f64 - 1.0)?;
    let fact: f64 = (1..k).map(|j| j as f64).product();
    let scale = lambda.powi(-(k as i32)) / fact;
    let nodes: Vec<(f64, f64)> = rule.iter().map(|&(u, w)| (u / lambda, w * scale)).collect();
    let times: Vec<f64> = nodes.iter().map(|n| n.0).collect();
    check_run(prob.model, x, *times.last().unwrap(), mc.h)?;
    let d = prob.rank();
    let q = nodes.len();
    // per path: re/im of the sum, floor sum, per-node norms, alive
    let width = 2 * d + 1 + q + 1;
    let acc = montecarlo::reduce(
        mc.n,
        mc.workers,
        || (Moments::new(width), Tally::default()),
        |i, (m, dom)| {
            let snaps = trajectory(prob, x, &times, None, mc.h, RngKey::new(mc.seed, i as u64))?;
            let mut sum = crate::linalg::CVector::zeros(d);
            let mut rhs = 0.0;
            let mut row = vec![0.0; width];
            for (j, (s, &(_, c))) in snaps.iter().zip(&nodes).enumerate() {
                if !s.alive {
                    continue;
                }
                let fy = f.eval(&s.end);
                let v = apply_weight(&s.weight, s.transport.apply(&fy)) * C64::new(c, 0.0);
                row[2 * d + 1 + j] = linalg::vec_norm(&v);
                sum += v;
                rhs += c * s.floor_weight() * linalg::vec_norm(&fy);
            }
            for (j, z) in sum.iter().enumerate() {
                row[2 * j] = z.re;
                row[2 * j + 1] = z.im;
            }
            row[2 * d] = rhs;
            row[width - 1] = if snaps[q - 1].alive { 1.0 } else { 0.0 };
            record_domination(dom, i, linalg::vec_norm(&sum), rhs);
            m.push(&row);
            Ok(())
        },
    )?;
    let (m, domination) = acc;
    let alive = m.mean()[width - 1];
    let value = (0..d).map(|j| C64::new(m.mean()[2 * j], m.mean()[2 * j + 1])).collect();
    let stderr = (0..d).map(|j| (m.stderr(2 * j).powi(2) + m.stderr(2 * j + 1).powi(2)).sqrt()).collect();
    let n = m.count() as usize;
    let estimate = Estimate { value, stderr, n_samples: n, h: mc.h, seed: mc.seed, alive_fraction: alive };
    let floor = Estimate::real(m.mean()[2 * d], m.stderr(2 * d), n, mc.h, mc.seed, alive);
    let contributions: Vec<f64> = (0..q).map(|j| m.mean()[2 * d + 1 + j]).collect();
    let total: f64 = contributions.iter().sum();
    let tail_share = if total > 0.0 { contributions[q - 1] / total } else { 0.0 };
    let below_spectrum = energy_lower_bound.is_some_and(|e| lambda <= -e);
    Ok(ResolventReport { estimate, floor, nodes, tail_share, diverging: tail_share > TAIL_SHARE || below_spectrum, domination })
}
