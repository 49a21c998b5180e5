//! Independent reference solvers: finite-difference Schrödinger operators
//! on 1-D grids (Dirichlet intervals and periodic circles with magnetic phase
//! links), closed-form kernels and laws used to validate the Monte Carlo
//! estimators.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{C64, ZERO};

/// Largest grid accepted by the eigenvalue solvers.
pub const MAX_GRID: usize = 4096;
/// Largest grid accepted by the dense semigroup propagator.
pub const MAX_DENSE: usize = 1024;

pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridKind {
    /// `(a, b)` with Dirichlet ends; `n` interior points.
    Interval { a: f64, b: f64 },
    /// Circle of the given radius in arc length; `n` points.
    Circle { radius: f64 },
}

/// Recipe for a grid operator, refinable for extrapolation.
#[derive(Clone)]
pub struct GridSpec {
    pub kind: GridKind,
    pub n: usize,
    pub potential: Profile,
    /// Coefficient of the magnetic 1-form against arc length; the phase of
    /// the link `x_j → x_{j+1}` is `β(midpoint)·h`.
    pub beta: Option<Profile>,
}

impl GridSpec {
    pub fn interval(a: f64, b: f64, n: usize, v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GridSpec { kind: GridKind::Interval { a, b }, n, potential: Arc::new(v), beta: None }
    }

    pub fn circle(radius: f64, n: usize, v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        GridSpec { kind: GridKind::Circle { radius }, n, potential: Arc::new(v), beta: None }
    }

    /// Uniform flux: `β = a dθ` on a circle.
    pub fn with_flux(mut self, a: f64) -> Self {
        let radius = match self.kind {
            GridKind::Circle { radius } => radius,
            GridKind::Interval { .. } => 1.0,
        };
        self.beta = Some(Arc::new(move |_| a / radius));
        self
    }

    pub fn with_beta(mut self, beta: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.beta = Some(Arc::new(beta));
        self
    }

    pub fn spacing(&self) -> f64 {
        match self.kind {
            GridKind::Interval { a, b } => (b - a) / (self.n + 1) as f64,
            GridKind::Circle { radius } => 2.0 * PI * radius / self.n as f64,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        match self.kind {
            GridKind::Interval { a, .. } => a + (j + 1) as f64 * self.spacing(),
            GridKind::Circle { .. } => j as f64 * self.spacing(),
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.point(j)).collect()
    }

    /// Half the spacing; coarse point `j` is fine point [`GridSpec::fine_index`].
    pub fn refined(&self) -> GridSpec {
        let n = match self.kind {
            GridKind::Interval { .. } => 2 * self.n + 1,
            GridKind::Circle { .. } => 2 * self.n,
        };
        GridSpec { n, ..self.clone() }
    }

    pub fn fine_index(&self, j: usize) -> usize {
        match self.kind {
            GridKind::Interval { .. } => 2 * j + 1,
            GridKind::Circle { .. } => 2 * j,
        }
    }

    pub fn build(&self) -> Result<GridOperator> {
        if self.n < 3 {
            return Err(Error::invalid("n", "grid needs at least 3 points"));
        }
        let h = self.spacing();
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::invalid("grid", "empty or non-finite domain"));
        }
        let kinetic = 1.0 / (h * h);
        let diag: Vec<f64> = self.points().iter().map(|&x| kinetic + (self.potential)(x)).collect();
        if let Some(j) = diag.iter().position(|d| !d.is_finite()) {
            return Err(Error::NonFinite { what: "grid potential".into(), step: j });
        }
        let links = match self.kind {
            GridKind::Interval { .. } => self.n - 1,
            GridKind::Circle { .. } => self.n,
        };
        let off = (0..links)
            .map(|j| {
                let phase = self.beta.as_ref().map_or(0.0, |b| b(self.point(j) + 0.5 * h) * h);
                C64::from_polar(-0.5 * kinetic, phase)
            })
            .collect();
        Ok(GridOperator { kind: self.kind, h, diag, off })
    }
}

/// `−½Δ_h + V_h`, possibly with unitary phase links. `off[j]` is the entry
/// `(j, j+1)` (cyclically on a circle).
#[derive(Clone, Debug)]
pub struct GridOperator {
    pub kind: GridKind,
    pub h: f64,
    pub diag: Vec<f64>,
    pub off: Vec<C64>,
}

impl GridOperator {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    fn periodic(&self) -> bool {
        matches!(self.kind, GridKind::Circle { .. })
    }

    pub fn dense(&self) -> DMatrix<C64> {
        let n = self.len();
        let mut a = DMatrix::from_element(n, n, ZERO);
        for j in 0..n {
            a[(j, j)] = C64::new(self.diag[j], 0.0);
        }
        for (j, &c) in self.off.iter().enumerate() {
            let k = (j + 1) % n;
            a[(j, k)] += c;
            a[(k, j)] += c.conj();
        }
        a
    }

    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        let n = self.len();
        let mut y: Vec<C64> = (0..n).map(|j| x[j] * self.diag[j]).collect();
        for (j, &c) in self.off.iter().enumerate() {
            let k = (j + 1) % n;
            y[j] += c * x[k];
            y[k] += c.conj() * x[j];
        }
        y
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.len();
        let mut radius = vec![0.0; n];
        for (j, c) in self.off.iter().enumerate() {
            radius[j] += c.norm();
            radius[(j + 1) % n] += c.norm();
        }
        let lo = (0..n).map(|j| self.diag[j] - radius[j]).fold(f64::INFINITY, f64::min);
        let hi = (0..n).map(|j| self.diag[j] + radius[j]).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Smallest eigenvalue: Sturm bisection on intervals (phases on a path
    /// graph are gauge-trivial), shifted inverse iteration on circles.
    pub fn lowest_eigenvalue(&self) -> Result<f64> {
        if self.periodic() {
            if self.len() > 2 * MAX_GRID {
                return Err(Error::invalid("n", format!("grid has {} points, maximum {MAX_GRID}", self.len())));
            }
            self.inverse_iteration()
        } else {
            Ok(self.sturm_lowest())
        }
    }

    /// Number of eigenvalues below `x` of the real tridiagonal matrix with
    /// off-diagonal moduli `|off|`.
    fn sturm_count(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for j in 0..self.len() {
            let e2 = if j == 0 { 0.0 } else { self.off[j - 1].norm_sqr() };
            q = self.diag[j] - x - if j == 0 { 0.0 } else { e2 / q };
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[j].abs() + x.abs()).max(1.0);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn sturm_lowest(&self) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.sturm_count(mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi.abs().max(lo.abs()).max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    fn inverse_iteration(&self) -> Result<f64> {
        let n = self.len();
        let (lo, hi) = self.gershgorin();
        let sigma = lo - 1e-3 * (hi - lo).max(1.0);
        let mut x: Vec<C64> = (0..n).map(|j| C64::new(1.0 + 0.1 * (j as f64).sin(), 0.05 * (j as f64).cos())).collect();
        let mut lambda = f64::NAN;
        for _ in 0..20_000 {
            let y = self.cyclic_solve(sigma, &x)?;
            let norm = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            x = y.into_iter().map(|z| z / norm).collect();
            let ax = self.apply(&x);
            let next: f64 = x.iter().zip(&ax).map(|(a, b)| (a.conj() * b).re).sum();
            if (next - lambda).abs() <= 1e-15 * next.abs().max(1.0) {
                return Ok(next);
            }
            lambda = next;
        }
        Err(Error::Numerical("inverse iteration did not converge".into()))
    }

    /// Solve `(A − σI) x = r` for the cyclic tridiagonal `A` by
    /// Sherman–Morrison around the Thomas algorithm.
    fn cyclic_solve(&self, sigma: f64, r: &[C64]) -> Result<Vec<C64>> {
        let n = self.len();
        let b: Vec<C64> = self.diag.iter().map(|d| C64::new(d - sigma, 0.0)).collect();
        let sup: Vec<C64> = (0..n - 1).map(|j| self.off[j]).collect();
        let sub: Vec<C64> = (0..n - 1).map(|j| self.off[j].conj()).collect();
        let alpha = self.off[n - 1].conj(); // (0, n-1)
        let beta = self.off[n - 1]; // (n-1, 0)
        let gamma = -b[0];
        let mut bb = b.clone();
        bb[0] -= gamma;
        bb[n - 1] -= alpha * beta / gamma;
        let y = thomas(&sub, &bb, &sup, r)?;
        let mut u = vec![ZERO; n];
        u[0] = gamma;
        u[n - 1] = beta;
        let q = thomas(&sub, &bb, &sup, &u)?;
        let vy = y[0] + alpha / gamma * y[n - 1];
        let vq = q[0] + alpha / gamma * q[n - 1];
        let f = vy / (C64::new(1.0, 0.0) + vq);
        Ok(y.iter().zip(&q).map(|(a, b)| a - f * b).collect())
    }

    /// `e^{-tA} f` by dense eigendecomposition.
    pub fn semigroup_apply(&self, f: &[C64], t: f64) -> Result<Vec<C64>> {
        if !(t >= 0.0) {
            return Err(Error::invalid("t", format!("need t ≥ 0, got {t}")));
        }
        if f.len() != self.len() {
            return Err(Error::invalid("f", "length does not match the grid"));
        }
        if t == 0.0 {
            return Ok(f.to_vec());
        }
        Ok(self.propagator(t)?.apply(f))
    }

    /// Dense `e^{-tA}`.
    pub fn propagator(&self, t: f64) -> Result<Propagator> {
        let n = self.len();
        if n > MAX_DENSE {
            return Err(Error::invalid("n", format!("dense propagator limited to {MAX_DENSE} points")));
        }
        let real = self.off.iter().all(|c| c.im == 0.0);
        let m = if real {
            let a = DMatrix::from_fn(n, n, |i, j| self.dense_real(i, j));
            let eig = SymmetricEigen::new(a);
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| (-t * l).exp()));
            (&eig.eigenvectors * d * eig.eigenvectors.transpose()).map(|x| C64::new(x, 0.0))
        } else {
            let eig = SymmetricEigen::new(self.dense());
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::new((-t * l).exp(), 0.0)));
            &eig.eigenvectors * d * eig.eigenvectors.adjoint()
        };
        Ok(Propagator { matrix: m })
    }

    fn dense_real(&self, i: usize, j: usize) -> f64 {
        let n = self.len();
        if i == j {
            self.diag[i]
        } else if (i + 1) % n == j && (self.periodic() || i + 1 < n) {
            self.off[i].re
        } else if (j + 1) % n == i && (self.periodic() || j + 1 < n) {
            self.off[j].re
        } else {
            0.0
        }
    }
}

/// Dense `e^{-tA}` on a grid.
pub struct Propagator {
    pub matrix: DMatrix<C64>,
}

impl Propagator {
    pub fn apply(&self, f: &[C64]) -> Vec<C64> {
        let v = nalgebra::DVector::from_column_slice(f);
        (&self.matrix * v).iter().copied().collect()
    }
}

fn thomas(sub: &[C64], diag: &[C64], sup: &[C64], r: &[C64]) -> Result<Vec<C64>> {
    let n = diag.len();
    let mut c = vec![ZERO; n];
    let mut d = vec![ZERO; n];
    let mut piv = diag[0];
    if piv.norm() == 0.0 {
        return Err(Error::Numerical("singular tridiagonal system".into()));
    }
    c[0] = if n > 1 { sup[0] / piv } else { ZERO };
    d[0] = r[0] / piv;
    for j in 1..n {
        piv = diag[j] - sub[j - 1] * c[j - 1];
        if piv.norm() == 0.0 {
            return Err(Error::Numerical("singular tridiagonal system".into()));
        }
        if j < n - 1 {
            c[j] = sup[j] / piv;
        }
        d[j] = (r[j] - sub[j - 1] * d[j - 1]) / piv;
    }
    let mut x = d;
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] -= c[j] * next;
    }
    Ok(x)
}

/// Richardson combination of second-order values at spacings `h1 > h2`.
pub fn richardson(v1: f64, h1: f64, v2: f64, h2: f64) -> f64 {
    (h1 * h1 * v2 - h2 * h2 * v1) / (h1 * h1 - h2 * h2)
}

/// Bottom of the spectrum of the grid operator, extrapolated from `spec` and
/// its refinement.
pub fn grid_ground_energy(spec: &GridSpec) -> Result<f64> {
    if spec.n > MAX_GRID {
        return Err(Error::invalid("n", format!("grid has {} points, maximum {MAX_GRID}", spec.n)));
    }
    let fine = spec.refined();
    let e1 = spec.build()?.lowest_eigenvalue()?;
    let e2 = fine.build()?.lowest_eigenvalue()?;
    Ok(richardson(e1, spec.spacing(), e2, fine.spacing()))
}

/// `e^{-tH} f` at the points of `spec`, extrapolated from `spec` and its
/// refinement (both at most [`MAX_DENSE`] points).
pub fn grid_semigroup(spec: &GridSpec, f: impl Fn(f64) -> C64, t: f64) -> Result<Vec<C64>> {
    let fine = spec.refined();
    let coarse = spec.build()?.semigroup_apply(&spec.points().iter().map(|&x| f(x)).collect::<Vec<_>>(), t)?;
    let refined = fine.build()?.semigroup_apply(&fine.points().iter().map(|&x| f(x)).collect::<Vec<_>>(), t)?;
    let (h1, h2) = (spec.spacing(), fine.spacing());
    Ok((0..spec.n)
        .map(|j| {
            let a = coarse[j];
            let b = refined[spec.fine_index(j)];
            C64::new(richardson(a.re, h1, b.re, h2), richardson(a.im, h1, b.im, h2))
        })
        .collect())
}

/// Kernel value `p_t(x_i, x_j)` of the grid operator (entry of `e^{-tH}`
/// divided by the spacing), extrapolated over two grids.
pub fn grid_kernel(spec: &GridSpec, t: f64, i: usize, j: usize) -> Result<f64> {
    let fine = spec.refined();
    let k1 = spec.build()?.propagator(t)?.matrix[(i, j)].re / spec.spacing();
    let k2 = fine.build()?.propagator(t)?.matrix[(spec.fine_index(i), spec.fine_index(j))].re / fine.spacing();
    Ok(richardson(k1, spec.spacing(), k2, fine.spacing()))
}

/// Mehler kernel of `−½Δ + ½ω²y²` on the line.
pub fn mehler_kernel(omega: f64, t: f64, x: f64, y: f64) -> f64 {
    let s = (omega * t).sinh();
    let c = (omega * t).cosh();
    (omega / (2.0 * PI * s)).sqrt() * (-omega * ((x * x + y * y) * c - 2.0 * x * y) / (2.0 * s)).exp()
}

/// Normalized ground state `π^{-1/4} e^{-y²/2}` of the unit oscillator.
pub fn oscillator_ground_state(y: f64) -> f64 {
    PI.powf(-0.25) * (-0.5 * y * y).exp()
}

/// Free heat flow of a Gaussian on the line:
/// `∫ p_t(x,y) e^{-y²/2σ²} dy = (σ²/(σ²+t))^{1/2} e^{-x²/2(σ²+t)}`.
pub fn heat_on_gaussian(t: f64, x: f64, sigma2: f64) -> f64 {
    (sigma2 / (sigma2 + t)).sqrt() * (-x * x / (2.0 * (sigma2 + t))).exp()
}

/// `E[e^{iλA_t}]` for the Lévy area `A_t = ½∫(x dy − y dx)`: `1/cosh(λt/2)`.
pub fn levy_area_cf(lambda: f64, t: f64) -> f64 {
    1.0 / (0.5 * lambda * t).cosh()
}

/// `P{sup_{s≤t} |W_s| < r}` for one-dimensional Brownian motion, by the
/// eigenfunction series (fast for large `t/r²`).
pub fn two_sided_survival(r: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..200 {
        let j = (2 * k + 1) as f64;
        let term = (-(j * j) * PI * PI * t / (8.0 * r * r)).exp() / j;
        sum += if k % 2 == 0 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    4.0 / PI * sum
}

/// The same probability by the reflection (image) series
/// `Σ_k (−1)^k [erfc((2k−1)r/√2t) − erfc((2k+1)r/√2t)]` over `k ∈ Z`,
/// fast for small `t/r²`.
pub fn two_sided_survival_images(r: f64, t: f64) -> f64 {
    let z = |k: i64| (2 * k + 1) as f64 * r / (2.0 * t).sqrt();
    // P = Σ_k (−1)^k P(|W_t − 2kr| < r) = Σ_k (−1)^k ½[erf(z(k)) − erf(z(k−1))]
    let mut sum = 0.0;
    for k in -60i64..=60 {
        let term = 0.5 * (libm::erf(z(k)) - libm::erf(z(k - 1)));
        sum += if k % 2 == 0 { term } else { -term };
    }
    sum
}

/// `e^{-tH}` for the circle of radius `R` with flux `β = a dθ`, applied to a
/// trigonometric polynomial `Σ c_n e^{inθ}`: modes decay at `(n+a)²/2R²`.
pub fn circle_magnetic_semigroup(radius: f64, a: f64, t: f64, modes: &[(i64, C64)], theta: f64) -> C64 {
    modes
        .iter()
        .map(|&(n, c)| {
            let k = n as f64 + a;
            c * C64::from_polar((-k * k * t / (2.0 * radius * radius)).exp(), n as f64 * theta)
        })
        .sum()
}

/// Smallest eigenvalue `min_n (n+a)²/2R²` of the magnetic circle.
pub fn circle_magnetic_ground_energy(radius: f64, a: f64) -> f64 {
    let d = a - a.round();
    d * d / (2.0 * radius * radius)
}

/// Legendre polynomial `P_l(x)`.
pub fn legendre(l: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if l == 0 {
        return 1.0;
    }
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * x * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// A sum of zonal harmonics `Σ c_j P_{l_j}(u_j · y)` on the sphere of
/// radius `R`; each term is an eigenfunction of `−½Δ` with eigenvalue
/// `l(l+1)/2R²`, so the heat flow is explicit.
#[derive(Clone, Debug)]
pub struct ZonalProbe {
    pub radius: f64,
    pub terms: Vec<(f64, usize, [f64; 3])>,
}

impl ZonalProbe {
    /// Value at a unit vector `y` (ambient coordinates divided by `R`).
    pub fn eval(&self, y: &[f64; 3]) -> f64 {
        self.heat(0.0, y)
    }

    /// `(P_t f)(y)`.
    pub fn heat(&self, t: f64, y: &[f64; 3]) -> f64 {
        self.terms
            .iter()
            .map(|(c, l, u)| {
                let lf = *l as f64;
                let dot = (u[0] * y[0] + u[1] * y[1] + u[2] * y[2]).clamp(-1.0, 1.0);
                c * (-lf * (lf + 1.0) * t / (2.0 * self.radius * self.radius)).exp() * legendre(*l, dot)
            })
            .sum()
    }

    pub fn scaled(&self, s: f64) -> ZonalProbe {
        ZonalProbe { radius: self.radius, terms: self.terms.iter().map(|(c, l, u)| (c * s, *l, *u)).collect() }
    }
}

/// One self-consistency check of the oracle suite.
#[derive(Clone, Debug)]
pub struct OracleCheck {
    pub name: &'static str,
    pub value: f64,
    pub reference: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        (self.value - self.reference).abs() <= self.tolerance
    }
}

/// Oracle-vs-oracle and oracle-vs-closed-form checks.
pub fn validate() -> Result<Vec<OracleCheck>> {
    let mut out = Vec::new();
    let harmonic = GridSpec::interval(-10.0, 10.0, 2048, |y| 0.5 * y * y);
    out.push(OracleCheck {
        name: "harmonic ground energy",
        value: grid_ground_energy(&harmonic)?,
        reference: 0.5,
        tolerance: 1e-4,
    });
    out.push(OracleCheck {
        name: "free circle ground energy",
        value: grid_ground_energy(&GridSpec::circle(1.0, 256, |_| 0.0))?,
        reference: 0.0,
        tolerance: 1e-10,
    });
    out.push(OracleCheck {
        name: "magnetic circle ground energy",
        value: grid_ground_energy(&GridSpec::circle(1.0, 256, |_| 0.0).with_flux(0.5))?,
        reference: 0.125,
        tolerance: 1e-4,
    });
    // x = 0 is coarse point 255 of 511 interior points on (−10, 10)
    let mehler_grid = GridSpec::interval(-10.0, 10.0, 511, |y| 0.5 * y * y);
    out.push(OracleCheck {
        name: "Mehler kernel at (0, 0, 1)",
        value: grid_kernel(&mehler_grid, 1.0, 255, 255)?,
        reference: mehler_kernel(1.0, 1.0, 0.0, 0.0),
        tolerance: 1e-6,
    });
    // spectral vs finite-difference flow of a Fourier mode under flux
    let (a, t) = (0.3, 0.7);
    let circle = GridSpec::circle(1.0, 256, |_| 0.0).with_flux(a);
    let flow = grid_semigroup(&circle, |x| C64::from_polar(1.0, 2.0 * x), t)?;
    let worst = (0..circle.n)
        .map(|j| (flow[j] - circle_magnetic_semigroup(1.0, a, t, &[(2, C64::new(1.0, 0.0))], circle.point(j))).norm())
        .fold(0.0, f64::max);
    out.push(OracleCheck { name: "circle spectral vs grid flow", value: worst, reference: 0.0, tolerance: 1e-6 });
    let (mass, diamagnetic) = grid_structure_defects()?;
    out.push(OracleCheck { name: "free circle mass conservation", value: mass, reference: 0.0, tolerance: 1e-10 });
    out.push(OracleCheck { name: "grid diamagnetic inequality", value: diamagnetic, reference: 0.0, tolerance: 1e-10 });
    out.push(OracleCheck {
        name: "exit survival: eigen vs image series",
        value: two_sided_survival(1.0, 1.0),
        reference: two_sided_survival_images(1.0, 1.0),
        tolerance: 1e-12,
    });
    Ok(out)
}

/// Mass defect of the free circle flow and the largest violation of
/// `|e^{-tH_β(v)} f| ≤ e^{-tH_0(v)} |f|` on a test grid.
fn grid_structure_defects() -> Result<(f64, f64)> {
    let free = GridSpec::circle(1.0, 128, |_| 0.0).build()?;
    let f: Vec<C64> = (0..128).map(|j| C64::new((j as f64 * 0.3).sin() + 1.5, 0.0)).collect();
    let g = free.semigroup_apply(&f, 0.8)?;
    let mass = (g.iter().sum::<C64>() - f.iter().sum::<C64>()).norm() / f.iter().map(|z| z.norm()).sum::<f64>();
    let v = |x: f64| 1.0 + x.cos();
    let magnetic = GridSpec::circle(1.0, 128, v).with_beta(|x| 0.4 + 0.3 * x.sin()).build()?;
    let scalar = GridSpec::circle(1.0, 128, v).build()?;
    let f: Vec<C64> = (0..128).map(|j| C64::from_polar(1.0 + 0.5 * (j as f64 * 0.1).cos(), j as f64 * 0.7)).collect();
    let absf: Vec<C64> = f.iter().map(|z| C64::new(z.norm(), 0.0)).collect();
    let lhs = magnetic.semigroup_apply(&f, 0.5)?;
    let rhs = scalar.semigroup_apply(&absf, 0.5)?;
    let violation = lhs.iter().zip(&rhs).map(|(l, r)| l.norm() - r.re).fold(0.0, f64::max);
    Ok((mass, violation))
}

#[cfg(test)]
mod tests;
