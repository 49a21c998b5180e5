//! Model Riemannian manifolds: frames, exponential map, distance, volume
//! rules and heat kernels.
//!
//! Tangent vectors are always given as coefficients in the model's
//! orthonormal frame at the base point:
//! * Euclidean, circle, torus: the coordinate frame (arc length on circles);
//! * sphere: the normalised stereographic frame from the south pole, smooth
//!   everywhere except at `(0, 0, -R)`;
//! * hyperbolic plane (Poincaré disk): `((1-|z|²)/2)·∂_x, ((1-|z|²)/2)·∂_y`.

mod kernel;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub use kernel::{circle_kernel, euclidean_kernel, hyperbolic_kernel, sphere_kernel, sphere_kernel_abs};

/// Largest supported manifold dimension (also bounds the ambient dimension).
pub const MAX_DIM: usize = 8;

/// Tolerance for point constraints (sphere radius, disk membership).
pub const POINT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Chart {
    /// Intrinsic coordinates: Euclidean coordinates, circle angle, torus
    /// coordinates, Poincaré disk coordinates.
    Intrinsic,
    /// Coordinates of an embedding (the sphere in R³).
    Ambient,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    coords: [f64; MAX_DIM],
    len: u8,
    chart: Chart,
}

impl Point {
    pub fn new(coords: &[f64], chart: Chart) -> Point {
        assert!(coords.len() <= MAX_DIM, "too many coordinates");
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Point { coords: c, len: coords.len() as u8, chart }
    }

    pub fn intrinsic(coords: &[f64]) -> Point {
        Point::new(coords, Chart::Intrinsic)
    }

    pub fn ambient(coords: &[f64]) -> Point {
        Point::new(coords, Chart::Ambient)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.len as usize]
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().all(|c| c.is_finite())
    }

    pub(crate) fn array3(&self) -> [f64; 3] {
        [self.coords[0], self.coords[1], self.coords[2]]
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "]")
    }
}

/// Signed function, positive exactly on the open domain.
pub type DomainFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Domain {
    /// Open geodesic ball `d(center, x) < radius` of the base model.
    Ball { center: Point, radius: f64 },
    /// Euclidean half-space `normal · x > offset`.
    HalfSpace { normal: Vec<f64>, offset: f64 },
    Custom { name: String, phi: DomainFn },
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Domain::Ball { center, radius } => write!(f, "Ball({center}, {radius})"),
            Domain::HalfSpace { normal, offset } => write!(f, "HalfSpace({normal:?}, {offset})"),
            Domain::Custom { name, .. } => write!(f, "Custom({name})"),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Manifold {
    Euclidean { m: usize },
    Circle { radius: f64 },
    FlatTorus { periods: Vec<f64> },
    Sphere2 { radius: f64 },
    /// Poincaré disk model of curvature −1.
    Hyperbolic,
    /// Open subdomain of a complete model; Brownian paths are killed on exit.
    Subdomain { base: Box<Manifold>, domain: Domain },
}

fn positive(key: &str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(Error::invalid(key, format!("must be a positive finite number, got {x}")))
    }
}

impl Manifold {
    pub fn euclidean(m: usize) -> Result<Manifold> {
        if m == 0 || m > MAX_DIM {
            return Err(Error::invalid("m", format!("dimension must be in 1..={MAX_DIM}, got {m}")));
        }
        Ok(Manifold::Euclidean { m })
    }

    pub fn circle(radius: f64) -> Result<Manifold> {
        Ok(Manifold::Circle { radius: positive("r", radius)? })
    }

    pub fn torus(periods: Vec<f64>) -> Result<Manifold> {
        if periods.is_empty() || periods.len() > MAX_DIM {
            return Err(Error::invalid("L", "torus needs between 1 and 8 periods"));
        }
        for &p in &periods {
            positive("L", p)?;
        }
        Ok(Manifold::FlatTorus { periods })
    }

    pub fn sphere2(radius: f64) -> Result<Manifold> {
        Ok(Manifold::Sphere2 { radius: positive("r", radius)? })
    }

    pub fn hyperbolic() -> Manifold {
        Manifold::Hyperbolic
    }

    /// Open geodesic ball of `base`.
    pub fn ball(base: Manifold, center: Point, radius: f64) -> Result<Manifold> {
        let base = base.into_complete("ball")?;
        base.check_point(&center).map_err(|e| Error::invalid("center", e.to_string()))?;
        positive("r", radius)?;
        Ok(Manifold::Subdomain { base: Box::new(base), domain: Domain::Ball { center, radius } })
    }

    pub fn half_space(base: Manifold, normal: Vec<f64>, offset: f64) -> Result<Manifold> {
        let base = base.into_complete("halfspace")?;
        match base {
            Manifold::Euclidean { m } if normal.len() == m => {}
            _ => return Err(Error::invalid("normal", "half-spaces need a Euclidean base and a normal of matching length")),
        }
        let norm = normal.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) || !offset.is_finite() {
            return Err(Error::invalid("normal", "normal must be nonzero and finite"));
        }
        let normal = normal.iter().map(|x| x / norm).collect();
        Ok(Manifold::Subdomain { base: Box::new(base), domain: Domain::HalfSpace { normal, offset: offset / norm } })
    }

    /// Open subdomain `{phi > 0}` given by an arbitrary continuous function.
    pub fn custom_domain(base: Manifold, name: &str, phi: DomainFn) -> Result<Manifold> {
        let base = base.into_complete("domain")?;
        Ok(Manifold::Subdomain {
            base: Box::new(base),
            domain: Domain::Custom { name: name.to_string(), phi },
        })
    }

    fn into_complete(self, key: &str) -> Result<Manifold> {
        match self {
            Manifold::Subdomain { .. } => Err(Error::invalid(key, "nested subdomains are not supported")),
            m => Ok(m),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Manifold::Euclidean { m } => *m,
            Manifold::Circle { .. } => 1,
            Manifold::FlatTorus { periods } => periods.len(),
            Manifold::Sphere2 { .. } | Manifold::Hyperbolic => 2,
            Manifold::Subdomain { base, .. } => base.dim(),
        }
    }

    /// Number of coordinates of a point.
    pub fn coord_len(&self) -> usize {
        match self {
            Manifold::Sphere2 { .. } => 3,
            Manifold::Subdomain { base, .. } => base.coord_len(),
            m => m.dim(),
        }
    }

    /// The complete model underlying a subdomain (or the model itself).
    pub fn base(&self) -> &Manifold {
        match self {
            Manifold::Subdomain { base, .. } => base,
            m => m,
        }
    }

    pub fn is_complete(&self) -> bool {
        !matches!(self, Manifold::Subdomain { .. })
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, Manifold::Circle { .. } | Manifold::FlatTorus { .. } | Manifold::Sphere2 { .. })
    }

    /// Flat models (Euclidean, circle, torus, and their subdomains).
    pub fn is_flat(&self) -> bool {
        matches!(self.base(), Manifold::Euclidean { .. } | Manifold::Circle { .. } | Manifold::FlatTorus { .. })
    }

    /// Canonical reference point: the origin, angle 0, or the north pole.
    pub fn origin(&self) -> Point {
        match self {
            Manifold::Sphere2 { radius } => Point::ambient(&[0.0, 0.0, *radius]),
            Manifold::Subdomain { base, domain } => match domain {
                Domain::Ball { center, .. } => *center,
                _ => base.origin(),
            },
            m => Point::intrinsic(&vec![0.0; m.dim()]),
        }
    }

    /// Build a point from user coordinates, normalising angles and periods.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("x", "coordinates must be finite"));
        }
        let p = match self.base() {
            Manifold::Circle { .. } => {
                if coords.len() != 1 {
                    return Err(Error::invalid("x", "circle points take one angle"));
                }
                Point::intrinsic(&[coords[0].rem_euclid(2.0 * PI)])
            }
            Manifold::FlatTorus { periods } => {
                if coords.len() != periods.len() {
                    return Err(Error::invalid("x", format!("torus points take {} coordinates", periods.len())));
                }
                let c: Vec<f64> = coords.iter().zip(periods).map(|(x, l)| x.rem_euclid(*l)).collect();
                Point::intrinsic(&c)
            }
            Manifold::Sphere2 { .. } => {
                if coords.len() != 3 {
                    return Err(Error::invalid("x", "sphere points take three ambient coordinates"));
                }
                Point::ambient(coords)
            }
            m => {
                if coords.len() != m.dim() {
                    return Err(Error::invalid("x", format!("expected {} coordinates", m.dim())));
                }
                Point::intrinsic(coords)
            }
        };
        self.check_point(&p)?;
        Ok(p)
    }

    /// Validate chart, length and model constraints (not domain membership).
    pub fn check_point(&self, p: &Point) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid("x", msg));
        if !p.is_finite() {
            return bad("non-finite coordinates".into());
        }
        if p.len() != self.coord_len() {
            return bad(format!("expected {} coordinates, got {}", self.coord_len(), p.len()));
        }
        match self.base() {
            Manifold::Sphere2 { radius } => {
                if p.chart() != Chart::Ambient {
                    return bad("sphere points use ambient coordinates".into());
                }
                let r = norm(p.coords());
                if (r - radius).abs() > POINT_TOL * radius.max(1.0) * 1e3 {
                    return bad(format!("point lies at radius {r}, not on the sphere of radius {radius}"));
                }
            }
            Manifold::Hyperbolic => {
                if norm(p.coords()) >= 1.0 {
                    return bad("point lies outside the Poincaré disk".into());
                }
            }
            Manifold::Circle { .. } => {
                let th = p.coords()[0];
                if !(0.0..2.0 * PI + POINT_TOL).contains(&th) {
                    return bad(format!("angle {th} not normalised to [0, 2π)"));
                }
            }
            Manifold::FlatTorus { periods } => {
                for (x, l) in p.coords().iter().zip(periods) {
                    if *x < -POINT_TOL || *x > l + POINT_TOL {
                        return bad(format!("torus coordinate {x} not normalised to [0, {l})"));
                    }
                }
            }
            _ => {}
        }
        if p.chart() == Chart::Ambient && !matches!(self.base(), Manifold::Sphere2 { .. }) {
            return bad("ambient coordinates are only used on the sphere".into());
        }
        Ok(())
    }

    /// Signed domain function: positive inside, `+∞` on complete models.
    pub fn domain_value(&self, p: &Point) -> f64 {
        match self {
            Manifold::Subdomain { base, domain } => match domain {
                Domain::Ball { center, radius } => radius - base.distance(center, p),
                Domain::HalfSpace { normal, offset } => {
                    normal.iter().zip(p.coords()).map(|(n, x)| n * x).sum::<f64>() - offset
                }
                Domain::Custom { phi, .. } => phi(p),
            },
            _ => f64::INFINITY,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.domain_value(p) > 0.0
    }

    pub fn injectivity_radius(&self) -> f64 {
        match self {
            Manifold::Euclidean { .. } | Manifold::Hyperbolic => f64::INFINITY,
            Manifold::Circle { radius } | Manifold::Sphere2 { radius } => PI * radius,
            Manifold::FlatTorus { periods } => 0.5 * periods.iter().cloned().fold(f64::INFINITY, f64::min),
            Manifold::Subdomain { base, .. } => base.injectivity_radius(),
        }
    }

    /// Hard limit on `|ξ|` accepted by [`Manifold::exp_step`]: the
    /// injectivity radius, beyond which the step no longer realises the
    /// distance.
    pub fn max_step(&self) -> f64 {
        self.injectivity_radius()
    }

    /// Typical step length the sampler may use: a tenth of the injectivity
    /// radius (a tenth of one unit on the noncompact models).
    pub fn step_bound(&self) -> f64 {
        let inj = self.injectivity_radius();
        0.1 * if inj.is_finite() { inj } else { 1.0 }
    }

    /// Largest time step accepted by the path sampler: `step_bound²`.
    pub fn max_h(&self) -> f64 {
        let b = self.step_bound();
        b * b
    }

    /// Geodesic step `exp_x(ξ)` with frame coefficients `ξ`.
    pub fn exp_step(&self, x: &Point, xi: &[f64]) -> Result<Point> {
        if xi.len() != self.dim() {
            return Err(Error::invalid("xi", format!("expected {} frame coefficients", self.dim())));
        }
        if xi.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("xi", "tangent vector has non-finite entries"));
        }
        let len = norm(xi);
        let max = self.max_step();
        if len > max * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { model: self.to_string(), len, max });
        }
        Ok(self.exp_unchecked(x, xi))
    }

    /// Exponential map without step validation; used by the sampler.
    pub fn exp_unchecked(&self, x: &Point, xi: &[f64]) -> Point {
        match self {
            Manifold::Euclidean { m } => {
                let mut c = [0.0; MAX_DIM];
                for i in 0..*m {
                    c[i] = x.coords[i] + xi[i];
                }
                Point { coords: c, len: *m as u8, chart: Chart::Intrinsic }
            }
            Manifold::Circle { radius } => {
                Point::intrinsic(&[(x.coords[0] + xi[0] / radius).rem_euclid(2.0 * PI)])
            }
            Manifold::FlatTorus { periods } => {
                let mut c = [0.0; MAX_DIM];
                for (i, l) in periods.iter().enumerate() {
                    c[i] = (x.coords[i] + xi[i]).rem_euclid(*l);
                }
                Point { coords: c, len: periods.len() as u8, chart: Chart::Intrinsic }
            }
            Manifold::Sphere2 { radius } => sphere_exp(*radius, &x.array3(), xi),
            Manifold::Hyperbolic => disk_exp(x, xi),
            Manifold::Subdomain { base, .. } => base.exp_unchecked(x, xi),
        }
    }

    /// Frame coefficients of `exp_x^{-1}(y)` (minimal geodesic).
    pub fn log(&self, x: &Point, y: &Point) -> Vec<f64> {
        match self.base() {
            Manifold::Euclidean { m } => (0..*m).map(|i| y.coords[i] - x.coords[i]).collect(),
            Manifold::Circle { radius } => vec![radius * wrap(y.coords[0] - x.coords[0], 2.0 * PI)],
            Manifold::FlatTorus { periods } => periods
                .iter()
                .enumerate()
                .map(|(i, l)| wrap(y.coords[i] - x.coords[i], *l))
                .collect(),
            Manifold::Sphere2 { radius } => sphere_log(*radius, &x.array3(), &y.array3()).to_vec(),
            Manifold::Hyperbolic => disk_log(x, y).to_vec(),
            Manifold::Subdomain { .. } => unreachable!(),
        }
    }

    /// Point at fraction `s` along the minimal geodesic from `x` to `y`.
    pub fn geodesic_point(&self, x: &Point, y: &Point, s: f64) -> Point {
        if let Manifold::Euclidean { m } = self.base() {
            let mut c = [0.0; MAX_DIM];
            for i in 0..*m {
                c[i] = x.coords[i] + s * (y.coords[i] - x.coords[i]);
            }
            return Point { coords: c, len: *m as u8, chart: Chart::Intrinsic };
        }
        let v: Vec<f64> = self.log(x, y).iter().map(|c| s * c).collect();
        self.base().exp_unchecked(x, &v)
    }

    pub fn distance(&self, x: &Point, y: &Point) -> f64 {
        match self.base() {
            Manifold::Euclidean { m } => {
                (0..*m).map(|i| (y.coords[i] - x.coords[i]).powi(2)).sum::<f64>().sqrt()
            }
            Manifold::Sphere2 { radius } => radius * sphere_angle(&x.array3(), &y.array3()),
            Manifold::Hyperbolic => disk_distance(x, y),
            _ => norm(&self.log(x, y)),
        }
    }

    /// Coordinate difference used by chart-based 1-forms: minimal-image
    /// differences on circle/torus, ambient differences on the sphere.
    pub fn chart_delta(&self, x: &Point, y: &Point) -> [f64; MAX_DIM] {
        let mut d = [0.0; MAX_DIM];
        match self.base() {
            Manifold::Circle { .. } => d[0] = wrap(y.coords[0] - x.coords[0], 2.0 * PI),
            Manifold::FlatTorus { periods } => {
                for (i, l) in periods.iter().enumerate() {
                    d[i] = wrap(y.coords[i] - x.coords[i], *l);
                }
            }
            _ => {
                for i in 0..x.len() {
                    d[i] = y.coords[i] - x.coords[i];
                }
            }
        }
        d
    }

    /// Orthonormal tangent frame of the sphere at `x` as ambient vectors.
    pub fn sphere_frame(&self, x: &Point) -> Option<[[f64; 3]; 2]> {
        match self.base() {
            Manifold::Sphere2 { radius } => Some(sphere_frame(&scale3(&x.array3(), 1.0 / radius))),
            _ => None,
        }
    }

    /// Levi-Civita parallel transport along the minimal geodesic `x → y`,
    /// expressed in the model frames: entry `(a, b)` is the `b`-th frame
    /// coefficient at `y` of the transported `a`-th frame vector at `x`.
    /// Flat models return the identity.
    pub fn transport_frame(&self, x: &Point, y: &Point) -> Vec<Vec<f64>> {
        let m = self.dim();
        match self.base() {
            Manifold::Sphere2 { radius } => {
                let xa = scale3(&x.array3(), 1.0 / radius);
                let ya = scale3(&y.array3(), 1.0 / radius);
                let ex = sphere_frame(&xa);
                let ey = sphere_frame(&ya);
                let moved = ex.map(|e| sphere_transport(&xa, &ya, &e));
                (0..2).map(|a| (0..2).map(|b| dot3(&moved[a], &ey[b])).collect()).collect()
            }
            Manifold::Hyperbolic => {
                let (c, s) = disk_transport_rotation(x, y);
                vec![vec![c, s], vec![-s, c]]
            }
            _ => (0..m).map(|a| (0..m).map(|b| if a == b { 1.0 } else { 0.0 }).collect()).collect(),
        }
    }

    /// Riemannian volume of a compact model.
    pub fn volume(&self) -> Option<f64> {
        match self {
            Manifold::Circle { radius } => Some(2.0 * PI * radius),
            Manifold::FlatTorus { periods } => Some(periods.iter().product()),
            Manifold::Sphere2 { radius } => Some(4.0 * PI * radius * radius),
            _ => None,
        }
    }

    /// Tensor quadrature rule for the Riemannian volume of a compact model
    /// (`n` controls the resolution per direction).
    pub fn volume_rule(&self, n: usize) -> Result<Vec<(Point, f64)>> {
        let n = n.max(2);
        match self {
            Manifold::Circle { radius } => Ok((0..n)
                .map(|i| (Point::intrinsic(&[2.0 * PI * i as f64 / n as f64]), 2.0 * PI * radius / n as f64))
                .collect()),
            Manifold::FlatTorus { periods } => {
                let total = n.checked_pow(periods.len() as u32).filter(|&c| c <= 4_000_000);
                let total = total.ok_or_else(|| Error::invalid("n", "torus volume rule too large"))?;
                let w: f64 = periods.iter().product::<f64>() / total as f64;
                Ok((0..total)
                    .map(|mut idx| {
                        let c: Vec<f64> = periods
                            .iter()
                            .map(|l| {
                                let i = idx % n;
                                idx /= n;
                                l * i as f64 / n as f64
                            })
                            .collect();
                        (Point::intrinsic(&c), w)
                    })
                    .collect())
            }
            Manifold::Sphere2 { radius } => {
                let zs = crate::quad::gauss_legendre(n, -1.0, 1.0);
                let nphi = 2 * n;
                let mut out = Vec::with_capacity(n * nphi);
                for (z, wz) in zs {
                    let s = (1.0 - z * z).max(0.0).sqrt();
                    for j in 0..nphi {
                        let phi = 2.0 * PI * (j as f64 + 0.5) / nphi as f64;
                        let p = [radius * s * phi.cos(), radius * s * phi.sin(), radius * z];
                        out.push((Point::ambient(&p), radius * radius * wz * 2.0 * PI / nphi as f64));
                    }
                }
                Ok(out)
            }
            _ => Err(Error::invalid("manifold", format!("{self} is not compact; no global volume rule"))),
        }
    }

    /// Point distributed uniformly with respect to the volume (compact models).
    pub fn uniform_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Point> {
        match self {
            Manifold::Circle { .. } => Ok(Point::intrinsic(&[rng.random::<f64>() * 2.0 * PI])),
            Manifold::FlatTorus { periods } => {
                let c: Vec<f64> = periods.iter().map(|l| rng.random::<f64>() * l).collect();
                Ok(Point::intrinsic(&c))
            }
            Manifold::Sphere2 { radius } => {
                let v: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                let n = norm(&v);
                Ok(Point::ambient(&scale3(&v, radius / n)))
            }
            _ => Err(Error::invalid("manifold", format!("{self} is not compact"))),
        }
    }

    /// Heat kernel `p_t(x, y)` of `Δ/2` with respect to the Riemannian volume.
    pub fn heat_kernel(&self, t: f64, x: &Point, y: &Point) -> Result<f64> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("t", format!("heat kernel needs t > 0, got {t}")));
        }
        match self {
            Manifold::Euclidean { m } => {
                let r2 = (0..*m).map(|i| (x.coords[i] - y.coords[i]).powi(2)).sum::<f64>();
                Ok(euclidean_kernel(*m, t, r2))
            }
            Manifold::Circle { radius } => {
                Ok(circle_kernel(t, radius * wrap(y.coords[0] - x.coords[0], 2.0 * PI), 2.0 * PI * radius))
            }
            Manifold::FlatTorus { periods } => Ok(periods
                .iter()
                .enumerate()
                .map(|(i, l)| circle_kernel(t, wrap(y.coords[i] - x.coords[i], *l), *l))
                .product()),
            Manifold::Sphere2 { radius } => Ok(sphere_kernel(t, sphere_angle(&x.array3(), &y.array3()), *radius)),
            Manifold::Hyperbolic => hyperbolic_kernel(t, disk_distance(x, y)),
            Manifold::Subdomain { .. } => Err(Error::NoClosedForm { model: self.to_string() }),
        }
    }

    /// `C_t = sup_{x,y} p_t(x, y)`; attained on the diagonal for the
    /// homogeneous models.
    pub fn sup_heat_kernel(&self, t: f64) -> Result<f64> {
        let o = self.origin();
        self.heat_kernel(t, &o, &o)
    }
}

impl fmt::Display for Manifold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Manifold::Euclidean { m } => write!(f, "euclidean(m={m})"),
            Manifold::Circle { radius } => write!(f, "circle(r={radius})"),
            Manifold::FlatTorus { periods } => {
                write!(f, "torus(L=[")?;
                for (i, l) in periods.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{l}")?;
                }
                write!(f, "])")
            }
            Manifold::Sphere2 { radius } => write!(f, "sphere2(r={radius})"),
            Manifold::Hyperbolic => write!(f, "hyperbolic()"),
            Manifold::Subdomain { base, domain } => match domain {
                Domain::Ball { center, radius } => {
                    if *center == base.origin() {
                        write!(f, "ball({base}, r={radius})")
                    } else {
                        write!(f, "ball({base}, r={radius}, center={center})")
                    }
                }
                Domain::HalfSpace { normal, offset } => {
                    write!(f, "halfspace({base}, normal=[")?;
                    for (i, n) in normal.iter().enumerate() {
                        if i > 0 {
                            write!(f, ",")?;
                        }
                        write!(f, "{n}")?;
                    }
                    write!(f, "], offset={offset})")
                }
                Domain::Custom { name, .. } => write!(f, "custom({base}, {name})"),
            },
        }
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Wrap a difference into `(-l/2, l/2]`.
pub(crate) fn wrap(d: f64, l: f64) -> f64 {
    let r = d.rem_euclid(l);
    if r > 0.5 * l {
        r - l
    } else {
        r
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn scale3(a: &[f64; 3], s: f64) -> [f64; 3] {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn axpy3(a: &[f64; 3], s: f64, b: &[f64; 3]) -> [f64; 3] {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]]
}

fn unit3(a: &[f64; 3]) -> [f64; 3] {
    scale3(a, 1.0 / norm(a))
}

/// Angle between two sphere points (robust near 0 and π).
fn sphere_angle(x: &[f64; 3], y: &[f64; 3]) -> f64 {
    norm(&cross3(x, y)).atan2(dot3(x, y))
}

/// Normalised stereographic frame (projection from the south pole) at a
/// unit vector `x`, re-orthonormalised against `x`.
fn sphere_frame(x: &[f64; 3]) -> [[f64; 3]; 2] {
    let denom = 1.0 + x[2];
    let (e1, e2) = if denom < 1e-12 {
        ([-1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    } else {
        let u = x[0] / denom;
        let v = x[1] / denom;
        let q = 1.0 + u * u + v * v;
        (
            [(1.0 + v * v - u * u) / q, -2.0 * u * v / q, -2.0 * u / q],
            [-2.0 * u * v / q, (1.0 + u * u - v * v) / q, -2.0 * v / q],
        )
    };
    let e1 = unit3(&axpy3(&e1, -dot3(&e1, x), x));
    let e2 = axpy3(&e2, -dot3(&e2, x), x);
    let e2 = unit3(&axpy3(&e2, -dot3(&e2, &e1), &e1));
    [e1, e2]
}

fn sphere_exp(radius: f64, x: &[f64; 3], xi: &[f64]) -> Point {
    let xu = scale3(x, 1.0 / radius);
    let [e1, e2] = sphere_frame(&xu);
    let v = axpy3(&scale3(&e1, xi[0]), xi[1], &e2);
    let len = norm(&v);
    if len == 0.0 {
        return Point::ambient(x);
    }
    let th = len / radius;
    let y = axpy3(&scale3(&xu, th.cos()), th.sin() / len, &v);
    Point::ambient(&scale3(&y, radius / norm(&y)))
}

fn sphere_log(radius: f64, x: &[f64; 3], y: &[f64; 3]) -> [f64; 2] {
    let xu = scale3(x, 1.0 / radius);
    let yu = scale3(y, 1.0 / radius);
    let [e1, e2] = sphere_frame(&xu);
    let gamma = sphere_angle(&xu, &yu);
    let w = axpy3(&yu, -dot3(&xu, &yu), &xu);
    let wn = norm(&w);
    if wn < 1e-300 {
        if gamma > 1.0 {
            // antipode: every direction is minimal, pick the first frame vector
            return [PI * radius, 0.0];
        }
        return [0.0, 0.0];
    }
    let s = radius * gamma / wn;
    [s * dot3(&w, &e1), s * dot3(&w, &e2)]
}

/// Rotate the tangent vector `w` at `x` along the great circle to `y`.
fn sphere_transport(x: &[f64; 3], y: &[f64; 3], w: &[f64; 3]) -> [f64; 3] {
    let axis = cross3(x, y);
    let s = norm(&axis);
    if s < 1e-300 {
        return *w;
    }
    let k = scale3(&axis, 1.0 / s);
    let c = dot3(x, y);
    // Rodrigues rotation about k by the angle between x and y
    let kxw = cross3(&k, w);
    let kw = dot3(&k, w);
    [
        w[0] * c + kxw[0] * s + k[0] * kw * (1.0 - c),
        w[1] * c + kxw[1] * s + k[1] * kw * (1.0 - c),
        w[2] * c + kxw[2] * s + k[2] * kw * (1.0 - c),
    ]
}

#[derive(Clone, Copy)]
struct Cx(f64, f64);

impl Cx {
    fn mul(self, o: Cx) -> Cx {
        Cx(self.0 * o.0 - self.1 * o.1, self.0 * o.1 + self.1 * o.0)
    }
    fn div(self, o: Cx) -> Cx {
        let d = o.0 * o.0 + o.1 * o.1;
        Cx((self.0 * o.0 + self.1 * o.1) / d, (self.1 * o.0 - self.0 * o.1) / d)
    }
    fn conj(self) -> Cx {
        Cx(self.0, -self.1)
    }
    fn add(self, o: Cx) -> Cx {
        Cx(self.0 + o.0, self.1 + o.1)
    }
    fn sub(self, o: Cx) -> Cx {
        Cx(self.0 - o.0, self.1 - o.1)
    }
    fn abs(self) -> f64 {
        self.0.hypot(self.1)
    }
}

const CX_ONE: Cx = Cx(1.0, 0.0);

/// Möbius map `φ_z(w) = (w + z) / (1 + z̄ w)`, an isometry sending 0 to z.
fn mobius(z: Cx, w: Cx) -> Cx {
    w.add(z).div(CX_ONE.add(z.conj().mul(w)))
}

fn mobius_inv(z: Cx, w: Cx) -> Cx {
    w.sub(z).div(CX_ONE.sub(z.conj().mul(w)))
}

fn disk_exp(x: &Point, xi: &[f64]) -> Point {
    let len = xi[0].hypot(xi[1]);
    if len == 0.0 {
        return *x;
    }
    let r = (0.5 * len).tanh();
    let w = Cx(r * xi[0] / len, r * xi[1] / len);
    let y = mobius(Cx(x.coords[0], x.coords[1]), w);
    let n = y.abs();
    // keep strictly inside the disk under rounding
    let y = if n >= 1.0 { Cx(y.0 / n * (1.0 - 1e-16), y.1 / n * (1.0 - 1e-16)) } else { y };
    Point::intrinsic(&[y.0, y.1])
}

fn disk_log(x: &Point, y: &Point) -> [f64; 2] {
    let u = mobius_inv(Cx(x.coords[0], x.coords[1]), Cx(y.coords[0], y.coords[1]));
    let n = u.abs();
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let d = 2.0 * n.min(1.0 - 1e-17).atanh();
    [d * u.0 / n, d * u.1 / n]
}

fn disk_distance(x: &Point, y: &Point) -> f64 {
    let u = mobius_inv(Cx(x.coords[0], x.coords[1]), Cx(y.coords[0], y.coords[1]));
    2.0 * u.abs().min(1.0 - 1e-17).atanh()
}

/// Parallel transport along the disk geodesic `x → y` rotates frame
/// coefficients by `-2·arg(1 + z̄u)` with `u = φ_z^{-1}(y)`.
fn disk_transport_rotation(x: &Point, y: &Point) -> (f64, f64) {
    let z = Cx(x.coords[0], x.coords[1]);
    let u = mobius_inv(z, Cx(y.coords[0], y.coords[1]));
    let q = CX_ONE.add(z.conj().mul(u));
    let q2 = q.conj().mul(q.conj());
    let n = q2.abs();
    (q2.0 / n, q2.1 / n)
}

#[cfg(test)]
mod tests;
