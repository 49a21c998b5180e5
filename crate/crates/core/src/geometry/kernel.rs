//! Heat kernels of `Δ/2` on the closed-form models.

use std::f64::consts::PI;

use crate::error::Result;
use crate::quad::gauss_legendre;

/// Terms below this are dropped from image and spectral sums.
pub const SERIES_TOL: f64 = 1e-15;

/// Gaussian kernel on `R^m` at squared distance `r2`.
pub fn euclidean_kernel(m: usize, t: f64, r2: f64) -> f64 {
    (2.0 * PI * t).powf(-0.5 * m as f64) * (-r2 / (2.0 * t)).exp()
}

/// Kernel of the circle of length `l` at arc-length displacement `s`.
pub fn circle_kernel(t: f64, s: f64, l: f64) -> f64 {
    if t <= 0.25 * l * l {
        // method of images
        let g = |d: f64| (-d * d / (2.0 * t)).exp();
        let mut sum = g(s);
        let mut n = 1.0;
        loop {
            let term = g(s + n * l) + g(s - n * l);
            sum += term;
            if term < SERIES_TOL * sum {
                break;
            }
            n += 1.0;
        }
        sum / (2.0 * PI * t).sqrt()
    } else {
        let k0 = 2.0 * PI / l;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            let decay = (-0.5 * (k * k0) * (k * k0) * t).exp();
            sum += 2.0 * decay * (k * k0 * s).cos();
            if 2.0 * decay < SERIES_TOL {
                break;
            }
            k += 1.0;
        }
        sum / l
    }
}

/// Kernel of the round sphere of radius `radius` at angle `gamma` between
/// the two points. For `τ = t/(2R²) ≥ 1` this is the Legendre series
/// `Σ_l (2l+1)/(4πR²) P_l(cos γ) e^{-l(l+1)τ}`, truncated once the remaining
/// tail is below `1e-12` relative. Smaller times use the image integral,
/// which keeps full relative accuracy far out in the Gaussian tail where the
/// series cancels catastrophically.
pub fn sphere_kernel(t: f64, gamma: f64, radius: f64) -> f64 {
    let tau = t / (2.0 * radius * radius);
    let area = radius * radius;
    let gamma = gamma.clamp(0.0, PI);
    if tau < 1.0 {
        return sphere_images(tau, gamma) / area;
    }
    sphere_series(tau, gamma) / area
}

/// Sphere kernel to absolute accuracy `1e-12` of its peak: the Legendre
/// series already from `τ ≥ 0.05`, where it needs a few dozen terms. Far in
/// the Gaussian tail the relative accuracy is lost, so this is meant for
/// integrals of the kernel, not for pointwise values.
pub fn sphere_kernel_abs(t: f64, gamma: f64, radius: f64) -> f64 {
    let tau = t / (2.0 * radius * radius);
    if tau < 0.05 {
        return sphere_kernel(t, gamma, radius);
    }
    sphere_series(tau, gamma.clamp(0.0, PI)) / (radius * radius)
}

fn sphere_series(tau: f64, gamma: f64) -> f64 {
    let x = gamma.cos();
    let mut p_prev = 1.0;
    let mut p = x;
    let mut sum = 1.0 + 3.0 * x * (-2.0 * tau).exp();
    let mut l = 1.0_f64;
    loop {
        let p_next = ((2.0 * l + 1.0) * x * p - l * p_prev) / (l + 1.0);
        p_prev = p;
        p = p_next;
        l += 1.0;
        let w = (2.0 * l + 1.0) * (-l * (l + 1.0) * tau).exp();
        sum += w * p;
        // terms decrease monotonically once l > 1/(2 tau); bound the tail by a geometric series
        if l * tau > 0.5 {
            let ratio = (-2.0 * (l + 1.0) * tau).exp() * (2.0 * l + 3.0) / (2.0 * l + 1.0);
            if ratio < 1.0 && w * ratio / (1.0 - ratio) < 1e-12 * sum.abs().max(1e-300) {
                break;
            }
        }
    }
    sum / (4.0 * PI)
}

/// Kernel of `e^{sΔ}` on the unit sphere at angle `theta`:
/// `√2 e^{s/4} (4πs)^{-3/2} Σ_n (-1)^n ∫_θ^π (φ+2πn) e^{-(φ+2πn)²/4s} (cos θ − cos φ)^{-1/2} dφ`.
/// With `a = π − θ` and `φ = π − a cos u` the endpoint singularity cancels
/// against `dφ = a sin u du`, uniformly in `θ`.
fn sphere_images(s: f64, theta: f64) -> f64 {
    let a = PI - theta;
    if a <= 0.0 {
        // antipode: the integral over the collapsed interval tends to π/√2 per image
        let mut sum = 0.0;
        for n in -8i32..=8 {
            let c = PI + 2.0 * PI * n as f64;
            sum += if n % 2 == 0 { 1.0 } else { -1.0 } * c * (-(c * c - PI * PI) / (4.0 * s)).exp();
        }
        return std::f64::consts::SQRT_2 * (s / 4.0 - PI * PI / (4.0 * s)).exp() * (4.0 * PI * s).powf(-1.5) * sum * PI
            / std::f64::consts::SQRT_2;
    }
    // exponents are measured relative to θ² to avoid underflow of the sum
    let cut = 4.0 * s * 46.0;
    let mut total = 0.0;
    for n in -8i32..=8 {
        let shift = 2.0 * PI * n as f64;
        // (φ + 2πn)² is monotone on [θ, π]: smallest at θ for n ≥ 0, at π otherwise
        let min_sq = if n >= 0 { (theta + shift).powi(2) } else { (PI + shift).powi(2) };
        if min_sq - theta * theta > cut {
            continue;
        }
        // φ range where the relative Gaussian factor is above e^{-46}
        let reach = (min_sq + cut).sqrt();
        let (u_lo, u_hi) = if n >= 0 {
            let phi_max = (reach - shift).min(PI);
            (0.0, phase_to_u(phi_max, a))
        } else {
            let phi_min = (-reach - shift).max(theta);
            (phase_to_u(phi_min, a), 0.5 * PI)
        };
        if u_hi <= u_lo {
            continue;
        }
        let integrand = |u: f64| {
            let su = (0.5 * u).sin();
            let cu = (0.5 * u).cos();
            let d = 2.0 * a * su * su; // φ − θ
            let phi = theta + d;
            let c = phi + shift;
            // cos θ − cos φ = 2 sin(a cos²(u/2)) sin(a sin²(u/2))
            let denom = (2.0 * (a * cu * cu).sin() * (a * su * su).sin()).sqrt();
            let rel = if n == 0 { d * (phi + theta) } else { c * c - theta * theta };
            let jac = a * u.sin();
            if denom == 0.0 {
                // u → 0 limit of jac / denom is √(2a / sin a)
                return c * (-rel / (4.0 * s)).exp() * (2.0 * a / a.sin().max(1e-300)).sqrt();
            }
            c * (-rel / (4.0 * s)).exp() * jac / denom
        };
        let panels = 4;
        let mut part = 0.0;
        for p in 0..panels {
            let x0 = u_lo + (u_hi - u_lo) * p as f64 / panels as f64;
            let x1 = u_lo + (u_hi - u_lo) * (p + 1) as f64 / panels as f64;
            part += gauss_legendre(24, x0, x1).iter().map(|(u, w)| w * integrand(*u)).sum::<f64>();
        }
        total += if n % 2 == 0 { part } else { -part };
    }
    std::f64::consts::SQRT_2 * (s / 4.0 - theta * theta / (4.0 * s)).exp() * (4.0 * PI * s).powf(-1.5) * total
}

/// Inverse of `φ = π − a cos u` on `[0, π/2]`.
fn phase_to_u(phi: f64, a: f64) -> f64 {
    ((PI - phi) / a).clamp(0.0, 1.0).acos()
}

/// Kernel of the hyperbolic plane (curvature −1) at distance `rho`, from
/// McKean's formula for `e^{sΔ}` with `s = t/2`:
/// `√2 e^{-s/4} (4πs)^{-3/2} ∫_ρ^∞ u e^{-u²/4s} (cosh u − cosh ρ)^{-1/2} du`.
/// The substitution `u = ρ + w²` removes the endpoint singularity.
pub fn hyperbolic_kernel(t: f64, rho: f64) -> Result<f64> {
    let s = 0.5 * t;
    let rho = rho.max(0.0);
    // range where the Gaussian factor drops by e^{-46}
    let w2_max = (rho * rho + 4.0 * s * 46.0).sqrt() - rho;
    let w_max = w2_max.sqrt();
    let integrand = |w: f64| {
        if w == 0.0 {
            return 0.0;
        }
        let w2 = w * w;
        let u = rho + w2;
        // (cosh u - cosh ρ) = 2 sinh(ρ + w²/2) sinh(w²/2)
        let denom = (2.0 * (rho + 0.5 * w2).sinh() * (0.5 * w2).sinh()).sqrt();
        let gauss = (-(2.0 * rho * w2 + w2 * w2) / (4.0 * s)).exp();
        2.0 * w * u * gauss / denom
    };
    let mut total = 0.0;
    let panels = 8;
    for p in 0..panels {
        let a = w_max * p as f64 / panels as f64;
        let b = w_max * (p + 1) as f64 / panels as f64;
        total += gauss_legendre(48, a, b).iter().map(|(w, wt)| wt * integrand(*w)).sum::<f64>();
    }
    let pref = std::f64::consts::SQRT_2 * (-s / 4.0 - rho * rho / (4.0 * s)).exp() * (4.0 * PI * s).powf(-1.5);
    Ok(pref * total)
}
