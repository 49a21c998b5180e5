//! Quadrature helpers. Gauss rules come from `gauss-quad`, adaptive
//! tanh-sinh integration from `quadrature`.

use std::num::NonZeroUsize;

use gauss_quad::{GaussLaguerre, GaussLegendre};

use crate::error::{Error, Result};

/// Gauss–Legendre nodes and weights mapped to `[a, b]`.
pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Vec<(f64, f64)> {
    let rule = GaussLegendre::new(NonZeroUsize::new(n.max(1)).unwrap());
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut out: Vec<(f64, f64)> = rule
        .iter()
        .map(|(x, w)| (mid + half * x, half * w))
        .collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

/// Generalised Gauss–Laguerre rule for `∫_0^∞ x^alpha e^{-x} g(x) dx`.
pub fn gauss_laguerre(n: usize, alpha: f64) -> Result<Vec<(f64, f64)>> {
    let a = gauss_quad::FiniteAboveNegOneF64::new(alpha)
        .ok_or_else(|| Error::invalid("k", format!("Laguerre exponent {alpha} must exceed -1")))?;
    let rule = GaussLaguerre::new(NonZeroUsize::new(n.max(1)).unwrap(), a);
    let mut out: Vec<(f64, f64)> = rule.iter().map(|(x, w)| (*x, *w)).collect();
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    Ok(out)
}

/// Adaptive double-exponential quadrature on a finite interval; tolerates
/// integrable endpoint singularities up to `|x - a|^{-1/2}`.
///
/// The backing routine truncates its nodes well before the endpoints, so each
/// half interval is first mapped by `x = end ± L u²`, which turns an inverse
/// square root at the endpoint into a smooth integrand.
pub fn tanh_sinh(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    let half = 0.5 * (b - a);
    let tol = 0.5 * abs_tol;
    let left = |u: f64| 2.0 * half * u * f(a + half * u * u);
    let right = |u: f64| 2.0 * half * u * f(b - half * u * u);
    quadrature::double_exponential::integrate(left, 0.0, 1.0, tol).integral
        + quadrature::double_exponential::integrate(right, 0.0, 1.0, tol).integral
}

/// Tanh-sinh over `[a, b]` split at the interior `breaks`.
pub fn tanh_sinh_split(f: impl Fn(f64) -> f64, a: f64, b: f64, breaks: &[f64], abs_tol: f64) -> f64 {
    let mut pts = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    inner.sort_by(f64::total_cmp);
    pts.extend(inner);
    pts.push(b);
    pts.windows(2).map(|w| tanh_sinh(&f, w[0], w[1], abs_tol)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials() {
        let r = gauss_legendre(5, 0.0, 2.0);
        let s: f64 = r.iter().map(|(x, w)| w * x.powi(7)).sum();
        assert!((s - 256.0 / 8.0).abs() < 1e-11);
    }

    #[test]
    fn laguerre_gamma_moments() {
        // ∫ x^2 e^{-x} x dx = Γ(4) = 6
        let r = gauss_laguerre(8, 2.0).unwrap();
        let s: f64 = r.iter().map(|(x, w)| w * x).sum();
        assert!((s - 6.0).abs() < 1e-10);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let s = tanh_sinh(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, 1e-12);
        assert!((s - 2.0).abs() < 1e-12, "{}", s - 2.0);
        // away from the origin the integrand's own `3 - x` cancels, which caps accuracy
        let s = tanh_sinh(|x: f64| 1.0 / (3.0 - x).sqrt(), 2.0, 3.0, 1e-12);
        assert!((s - 2.0).abs() < 1e-7, "{}", s - 2.0);
    }

    #[test]
    fn tanh_sinh_smooth_integrand() {
        let s = tanh_sinh(|x: f64| x.cos(), 0.0, 2.0, 1e-13);
        assert!((s - 2f64.sin()).abs() < 1e-13);
    }
}
