//! Small dense complex linear algebra on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest supported fiber dimension.
pub const MAX_RANK: usize = 16;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn real_matrix(d: usize, entries: &[f64]) -> CMatrix {
    CMatrix::from_iterator(d, d, entries.iter().map(|&x| C64::new(x, 0.0))).transpose()
}

/// Operator norm (largest singular value).
pub fn op_norm(a: &CMatrix) -> f64 {
    match (a.nrows(), a.ncols()) {
        (0, _) | (_, 0) => 0.0,
        (1, 1) => a[(0, 0)].norm(),
        (2, 2) => {
            // eigenvalues of the 2x2 Hermitian matrix A*A
            let p = a[(0, 0)].norm_sqr() + a[(1, 0)].norm_sqr();
            let r = a[(0, 1)].norm_sqr() + a[(1, 1)].norm_sqr();
            let q = a[(0, 0)].conj() * a[(0, 1)] + a[(1, 0)].conj() * a[(1, 1)];
            let mean = 0.5 * (p + r);
            let half = 0.5 * (p - r);
            (mean + (half * half + q.norm_sqr()).sqrt()).max(0.0).sqrt()
        }
        _ => a.clone().svd(false, false).singular_values.max(),
    }
}

/// Euclidean norm of a complex vector.
pub fn vec_norm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues (ascending) and eigenvectors of a Hermitian matrix.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let d = a.nrows();
    if d == 1 {
        return (vec![a[(0, 0)].re], identity(1));
    }
    let eig = nalgebra::SymmetricEigen::new(hermitian_part(a));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(d, d, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn lambda_min(a: &CMatrix) -> f64 {
    match a.nrows() {
        1 => a[(0, 0)].re,
        2 => {
            let (lo, _) = eig2(a);
            lo
        }
        _ => hermitian_eigen(a).0[0],
    }
}

/// Largest eigenvalue of a Hermitian matrix.
pub fn lambda_max(a: &CMatrix) -> f64 {
    match a.nrows() {
        1 => a[(0, 0)].re,
        2 => eig2(a).1,
        _ => *hermitian_eigen(a).0.last().unwrap(),
    }
}

fn eig2(a: &CMatrix) -> (f64, f64) {
    let p = a[(0, 0)].re;
    let r = a[(1, 1)].re;
    let q = 0.5 * (a[(0, 1)] + a[(1, 0)].conj());
    let mean = 0.5 * (p + r);
    let mu = (0.25 * (p - r) * (p - r) + q.norm_sqr()).sqrt();
    (mean - mu, mean + mu)
}

/// Apply a real function to the spectrum of a Hermitian matrix.
pub fn spectral_map(a: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, u) = hermitian_eigen(a);
    let d = a.nrows();
    let diag = CMatrix::from_diagonal(&CVector::from_iterator(
        d,
        values.iter().map(|&l| C64::new(f(l), 0.0)),
    ));
    &u * diag * u.adjoint()
}

pub fn positive_part(a: &CMatrix) -> CMatrix {
    spectral_map(a, |l| l.max(0.0))
}

pub fn negative_part(a: &CMatrix) -> CMatrix {
    spectral_map(a, |l| (-l).max(0.0))
}

pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

pub fn hermitian_defect(a: &CMatrix) -> f64 {
    (a - a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `U*U - I` in modulus.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let d = u.nrows();
    (u.adjoint() * u - identity(d)).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// General matrix exponential (Padé scaling and squaring from nalgebra).
pub fn expm(a: &CMatrix) -> CMatrix {
    match a.nrows() {
        1 => CMatrix::from_element(1, 1, a[(0, 0)].exp()),
        _ => a.clone().exp(),
    }
}

/// `exp(-tau * W)` for Hermitian `W`. Rank one and two use the closed forms,
/// larger ranks fall back to [`expm`].
pub fn exp_neg_hermitian(w: &CMatrix, tau: f64) -> CMatrix {
    match w.nrows() {
        1 => CMatrix::from_element(1, 1, C64::new((-tau * w[(0, 0)].re).exp(), 0.0)),
        2 => {
            let p = w[(0, 0)].re;
            let r = w[(1, 1)].re;
            let q = 0.5 * (w[(0, 1)] + w[(1, 0)].conj());
            let a = 0.5 * (p + r);
            let delta = 0.5 * (p - r);
            let mu = (delta * delta + q.norm_sqr()).sqrt();
            let lo = (-tau * (a - mu)).exp();
            let hi = (-tau * (a + mu)).exp();
            let c = 0.5 * (lo + hi);
            // sinh(tau mu)/mu, guarded for tiny mu
            let s = if (tau * mu).abs() < 1e-8 {
                (-tau * a).exp() * tau
            } else {
                (lo - hi) / (2.0 * mu)
            };
            let mut out = CMatrix::zeros(2, 2);
            out[(0, 0)] = C64::new(c - s * delta, 0.0);
            out[(1, 1)] = C64::new(c + s * delta, 0.0);
            out[(0, 1)] = -q * s;
            out[(1, 0)] = -q.conj() * s;
            out
        }
        _ => expm(&(hermitian_part(w) * C64::new(-tau, 0.0))),
    }
}

/// Random Hermitian matrix with independent Gaussian entries of scale `scale`.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> CMatrix {
    let mut a = CMatrix::zeros(d, d);
    for i in 0..d {
        let x: f64 = rng.sample(StandardNormal);
        a[(i, i)] = C64::new(scale * x, 0.0);
        for j in 0..i {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = C64::new(re, im) * (scale / std::f64::consts::SQRT_2);
            a[(i, j)] = z;
            a[(j, i)] = z.conj();
        }
    }
    a
}

/// Random complex matrix (not Hermitian).
pub fn random_complex<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im) * (scale / std::f64::consts::SQRT_2)
    })
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
}
