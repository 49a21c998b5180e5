//! Scalar potentials, matrix potentials, magnetic 1-forms and sections.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, Point, MAX_DIM};
use crate::linalg::{self, CMatrix, CVector, C64};

pub type ScalarFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(&Point) -> CMatrix + Send + Sync>;
pub type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Integrability class of a (nonnegative) potential part, from most to least
/// regular.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum KatoClass {
    Bounded,
    Kato,
    LocallyKato,
    LocallyIntegrable,
}

impl fmt::Display for KatoClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            KatoClass::Bounded => "bounded",
            KatoClass::Kato => "kato",
            KatoClass::LocallyKato => "locallyKato",
            KatoClass::LocallyIntegrable => "locallyIntegrable",
        };
        f.write_str(s)
    }
}

/// Radial structure `v(y) = profile(|y - center|)` on a Euclidean model,
/// used by the Kato quadrature.
#[derive(Clone)]
pub struct Radial {
    pub center: Point,
    pub profile: ProfileFn,
    /// Radii where the profile is not smooth (jumps, kinks).
    pub breaks: Vec<f64>,
}

#[derive(Clone)]
pub struct ScalarField {
    name: String,
    f: ScalarFn,
    singular: Vec<Point>,
    radial: Option<Radial>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ScalarField({})", self.name)
    }
}

impl ScalarField {
    pub fn new(name: impl Into<String>, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        ScalarField { name: name.into(), f: Arc::new(f), singular: Vec::new(), radial: None }
    }

    pub fn with_singular(mut self, points: Vec<Point>) -> Self {
        self.singular = points;
        self
    }

    /// Radial field `profile(|y - center|)` on a Euclidean model.
    pub fn radial(
        name: impl Into<String>,
        center: Point,
        profile: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breaks: Vec<f64>,
        singular_at_center: bool,
    ) -> Self {
        let profile: ProfileFn = Arc::new(profile);
        let p = profile.clone();
        let c = center;
        let f = move |y: &Point| {
            let r = y.coords().iter().zip(c.coords()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            p(r)
        };
        ScalarField {
            name: name.into(),
            f: Arc::new(f),
            singular: if singular_at_center { vec![center] } else { Vec::new() },
            radial: Some(Radial { center, profile, breaks }),
        }
    }

    pub fn zero() -> Self {
        ScalarField::new("0", |_| 0.0)
    }

    pub fn constant(c: f64) -> Self {
        ScalarField::new(format!("constant({c})"), move |_| c)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> f64 {
        (self.f)(x)
    }

    pub fn singular_points(&self) -> &[Point] {
        &self.singular
    }

    pub fn is_singular(&self) -> bool {
        !self.singular.is_empty()
    }

    pub fn radial_structure(&self) -> Option<&Radial> {
        self.radial.as_ref()
    }

    /// Pointwise map preserving singular points and radial structure.
    pub fn map(&self, name: impl Into<String>, g: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static) -> Self {
        let f = self.f.clone();
        let g2 = g.clone();
        ScalarField {
            name: name.into(),
            f: Arc::new(move |x| g(f(x))),
            singular: self.singular.clone(),
            radial: self.radial.as_ref().map(|r| {
                let p = r.profile.clone();
                Radial { center: r.center, profile: Arc::new(move |s| g2(p(s))), breaks: r.breaks.clone() }
            }),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(format!("|{}|", self.name), f64::abs)
    }

    pub fn positive_part(&self) -> Self {
        self.map(format!("({})+", self.name), |v| v.max(0.0))
    }

    pub fn negative_part(&self) -> Self {
        self.map(format!("({})-", self.name), |v| (-v).max(0.0))
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(format!("{c}*{}", self.name), move |v| c * v)
    }

    /// Sum of fields; radial structure survives only for a common center.
    pub fn sum(name: impl Into<String>, terms: &[ScalarField]) -> Self {
        let fs: Vec<ScalarFn> = terms.iter().map(|t| t.f.clone()).collect();
        let singular = terms.iter().flat_map(|t| t.singular.iter().copied()).collect();
        let radial = match terms.first().and_then(|t| t.radial.as_ref()) {
            Some(r0) if terms.iter().all(|t| t.radial.as_ref().is_some_and(|r| r.center == r0.center)) => {
                let ps: Vec<ProfileFn> = terms.iter().map(|t| t.radial.as_ref().unwrap().profile.clone()).collect();
                let breaks = terms.iter().flat_map(|t| t.radial.as_ref().unwrap().breaks.clone()).collect();
                Some(Radial { center: r0.center, profile: Arc::new(move |s| ps.iter().map(|p| p(s)).sum()), breaks })
            }
            _ => None,
        };
        ScalarField { name: name.into(), f: Arc::new(move |x| fs.iter().map(|f| f(x)).sum()), singular, radial }
    }
}

/// Coulomb potential `alpha / |y - center|` on a Euclidean model.
pub fn coulomb(alpha: f64, center: Point) -> ScalarField {
    ScalarField::radial(format!("coulomb({alpha})"), center, move |r| alpha / r, Vec::new(), true)
}

/// `alpha / |y - center|^p`.
pub fn inverse_power(alpha: f64, p: f64, center: Point) -> ScalarField {
    ScalarField::radial(format!("invpow({alpha},{p})"), center, move |r| alpha / r.powf(p), Vec::new(), true)
}

/// Coulomb potential cut off outside the ball of radius `r0`.
pub fn coulomb_in_ball(alpha: f64, center: Point, r0: f64) -> ScalarField {
    ScalarField::radial(
        format!("coulombball({alpha},{r0})"),
        center,
        move |r| if r < r0 { alpha / r } else { 0.0 },
        vec![r0],
        true,
    )
}

/// Harmonic potential `ω²|y|²/2` in intrinsic coordinates.
pub fn harmonic(omega: f64) -> ScalarField {
    let w2 = omega * omega;
    ScalarField::new(format!("harmonic({omega})"), move |y: &Point| 0.5 * w2 * y.coords().iter().map(|c| c * c).sum::<f64>())
}

/// Square well: `-depth` inside the ball of radius `r` about `center`.
pub fn well(depth: f64, r: f64, center: Point) -> ScalarField {
    ScalarField::radial(format!("well({depth},{r})"), center, move |s| if s < r { -depth } else { 0.0 }, vec![r], false)
}

/// Matrix-valued potential `V = V⁽¹⁾ − V⁽²⁾` of rank `d`.
#[derive(Clone)]
pub struct Potential {
    rank: usize,
    kind: PotentialKind,
    negative_class: KatoClass,
    positive_class: KatoClass,
    description: String,
}

#[derive(Clone)]
enum PotentialKind {
    /// `V = v·I`.
    Scalar(ScalarField),
    Matrix {
        field: MatrixFn,
        positive: Option<MatrixFn>,
        negative: Option<MatrixFn>,
        floor: Option<ScalarFn>,
        singular: Vec<Point>,
    },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential(rank {}, {})", self.rank, self.description)
    }
}

impl Potential {
    /// `V = v·I_d` with the canonical split `v = v⁺ − v⁻`.
    pub fn scalar(v: ScalarField, rank: usize, negative_class: KatoClass, positive_class: KatoClass) -> Self {
        Potential { rank, description: v.name().to_string(), kind: PotentialKind::Scalar(v), negative_class, positive_class }
    }

    pub fn zero(rank: usize) -> Self {
        Potential::scalar(ScalarField::zero(), rank, KatoClass::Bounded, KatoClass::Bounded)
    }

    /// Matrix field with parts defined fiberwise by the spectral split.
    pub fn matrix(
        description: impl Into<String>,
        rank: usize,
        field: impl Fn(&Point) -> CMatrix + Send + Sync + 'static,
        negative_class: KatoClass,
        positive_class: KatoClass,
        singular: Vec<Point>,
    ) -> Result<Self> {
        if rank == 0 || rank > linalg::MAX_RANK {
            return Err(Error::UnsupportedRank(rank));
        }
        Ok(Potential {
            rank,
            description: description.into(),
            kind: PotentialKind::Matrix { field: Arc::new(field), positive: None, negative: None, floor: None, singular },
            negative_class,
            positive_class,
        })
    }

    /// Override the parts `V⁽¹⁾`, `V⁽²⁾` (must satisfy `V = V⁽¹⁾ − V⁽²⁾`).
    pub fn with_parts(mut self, positive: MatrixFn, negative: MatrixFn) -> Self {
        if let PotentialKind::Matrix { positive: p, negative: n, .. } = &mut self.kind {
            *p = Some(positive);
            *n = Some(negative);
        }
        self
    }

    /// Override the scalar floor `v ≤ min σ(V)`.
    pub fn with_floor(mut self, floor: ScalarFn) -> Self {
        if let PotentialKind::Matrix { floor: f, .. } = &mut self.kind {
            *f = Some(floor);
        }
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn negative_class(&self) -> KatoClass {
        self.negative_class
    }

    pub fn positive_class(&self) -> KatoClass {
        self.positive_class
    }

    pub fn as_scalar(&self) -> Option<&ScalarField> {
        match &self.kind {
            PotentialKind::Scalar(v) => Some(v),
            _ => None,
        }
    }

    pub fn singular_points(&self) -> &[Point] {
        match &self.kind {
            PotentialKind::Scalar(v) => v.singular_points(),
            PotentialKind::Matrix { singular, .. } => singular,
        }
    }

    pub fn is_singular(&self) -> bool {
        !self.singular_points().is_empty()
    }

    pub fn value(&self, x: &Point) -> CMatrix {
        match &self.kind {
            PotentialKind::Scalar(v) => linalg::identity(self.rank) * C64::new(v.eval(x), 0.0),
            PotentialKind::Matrix { field, .. } => field(x),
        }
    }

    pub fn positive_part(&self, x: &Point) -> CMatrix {
        match &self.kind {
            PotentialKind::Scalar(v) => linalg::identity(self.rank) * C64::new(v.eval(x).max(0.0), 0.0),
            PotentialKind::Matrix { positive: Some(p), .. } => p(x),
            PotentialKind::Matrix { field, .. } => linalg::positive_part(&field(x)),
        }
    }

    pub fn negative_part(&self, x: &Point) -> CMatrix {
        match &self.kind {
            PotentialKind::Scalar(v) => linalg::identity(self.rank) * C64::new((-v.eval(x)).max(0.0), 0.0),
            PotentialKind::Matrix { negative: Some(n), .. } => n(x),
            PotentialKind::Matrix { field, .. } => linalg::negative_part(&field(x)),
        }
    }

    /// `‖V⁽²⁾(x)‖`.
    pub fn negative_norm(&self, x: &Point) -> f64 {
        match &self.kind {
            PotentialKind::Scalar(v) => (-v.eval(x)).max(0.0),
            PotentialKind::Matrix { negative: Some(n), .. } => linalg::lambda_max(&n(x)).max(0.0),
            PotentialKind::Matrix { field, .. } => (-linalg::lambda_min(&field(x))).max(0.0),
        }
    }

    /// Scalar floor `v(x) ≤ min σ(V(x))`; defaults to the smallest eigenvalue.
    pub fn scalar_floor(&self, x: &Point) -> f64 {
        match &self.kind {
            PotentialKind::Scalar(v) => v.eval(x),
            PotentialKind::Matrix { floor: Some(f), .. } => f(x),
            PotentialKind::Matrix { field, .. } => linalg::lambda_min(&field(x)),
        }
    }

    /// The scalar floor as a field (the comparison potential of domination).
    pub fn floor_field(&self) -> ScalarField {
        match &self.kind {
            PotentialKind::Scalar(v) => v.clone(),
            _ => {
                let me = self.clone();
                ScalarField::new(format!("floor({})", self.description), move |x| me.scalar_floor(x))
                    .with_singular(self.singular_points().to_vec())
            }
        }
    }

    /// `‖V⁽²⁾‖` as a scalar field (input of the Kato and Khas'minskii checks).
    pub fn negative_norm_field(&self) -> ScalarField {
        match &self.kind {
            PotentialKind::Scalar(v) => v.negative_part(),
            _ => {
                let me = self.clone();
                ScalarField::new(format!("|V2|({})", self.description), move |x| me.negative_norm(x))
                    .with_singular(self.singular_points().to_vec())
            }
        }
    }
}

/// A 1-form given by its components in the model chart (ambient components
/// on the sphere).
#[derive(Clone)]
pub struct OneForm {
    name: String,
    f: Arc<dyn Fn(&Point) -> [f64; MAX_DIM] + Send + Sync>,
}

impl fmt::Debug for OneForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OneForm({})", self.name)
    }
}

impl OneForm {
    pub fn new(name: impl Into<String>, f: impl Fn(&Point) -> [f64; MAX_DIM] + Send + Sync + 'static) -> Self {
        OneForm { name: name.into(), f: Arc::new(f) }
    }

    pub fn zero() -> Self {
        OneForm::new("0", |_| [0.0; MAX_DIM])
    }

    /// Constant coefficients `Σ c_j dx^j` (on the circle: `c dθ`).
    pub fn constant(c: &[f64]) -> Self {
        let mut a = [0.0; MAX_DIM];
        a[..c.len()].copy_from_slice(c);
        let name = format!("const({c:?})");
        OneForm::new(name, move |_| a)
    }

    /// `λ (x dy − y dx)/2` on the plane; its line integral along Brownian
    /// motion is `λ` times Lévy's stochastic area.
    pub fn area(lambda: f64) -> Self {
        OneForm::new(format!("area({lambda})"), move |p| {
            let c = p.coords();
            let mut a = [0.0; MAX_DIM];
            a[0] = -0.5 * lambda * c[1];
            a[1] = 0.5 * lambda * c[0];
            a
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> [f64; MAX_DIM] {
        (self.f)(x)
    }

    /// `β(mid)[Δ]` with `Δ` the chart difference of the step.
    #[inline]
    pub fn pair(&self, model: &Manifold, from: &Point, to: &Point, mid: &Point) -> f64 {
        let b = self.eval(mid);
        let d = model.chart_delta(from, to);
        b.iter().zip(d.iter()).map(|(x, y)| x * y).sum()
    }
}

/// A section of the bundle written in the frame of the fiber at each point.
#[derive(Clone)]
pub struct Section {
    name: String,
    rank: usize,
    f: Arc<dyn Fn(&Point) -> CVector + Send + Sync>,
    sup_norm: Option<f64>,
    l2_norm: Option<f64>,
}

impl fmt::Debug for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Section({})", self.name)
    }
}

impl Section {
    pub fn new(name: impl Into<String>, rank: usize, f: impl Fn(&Point) -> CVector + Send + Sync + 'static) -> Self {
        Section { name: name.into(), rank, f: Arc::new(f), sup_norm: None, l2_norm: None }
    }

    pub fn scalar(name: impl Into<String>, f: impl Fn(&Point) -> C64 + Send + Sync + 'static) -> Self {
        Section::new(name, 1, move |x| CVector::from_element(1, f(x)))
    }

    pub fn real(name: impl Into<String>, f: impl Fn(&Point) -> f64 + Send + Sync + 'static) -> Self {
        Section::scalar(name, move |x| C64::new(f(x), 0.0))
    }

    /// Constant section with the given fiber coordinates.
    pub fn constant(values: Vec<C64>) -> Self {
        let v = CVector::from_vec(values);
        let sup = linalg::vec_norm(&v);
        let name = if v.len() == 1 && v[0].im == 0.0 { format!("constant({})", v[0].re) } else { "constant".into() };
        Section::new(name, v.len(), move |_| v.clone()).with_sup_norm(sup)
    }

    pub fn with_sup_norm(mut self, s: f64) -> Self {
        self.sup_norm = Some(s);
        self
    }

    pub fn with_l2_norm(mut self, s: f64) -> Self {
        self.l2_norm = Some(s);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn sup_norm(&self) -> Option<f64> {
        self.sup_norm
    }

    pub fn l2_norm(&self) -> Option<f64> {
        self.l2_norm
    }

    #[inline]
    pub fn eval(&self, x: &Point) -> CVector {
        (self.f)(x)
    }

    /// Pointwise norm `|f|` as a rank-one section.
    pub fn pointwise_norm(&self) -> Section {
        let me = self.clone();
        let mut s = Section::real(format!("|{}|", self.name), move |x| linalg::vec_norm(&me.eval(x)));
        s.sup_norm = self.sup_norm;
        s.l2_norm = self.l2_norm;
        s
    }
}

/// `e^{-|y - c|²/2}` (times an optional constant vector for higher rank).
pub fn gaussian_section(center: Point, scale: f64) -> Section {
    let c = center;
    let m = c.len() as f64;
    Section::real(format!("gaussian({scale})"), move |y: &Point| {
        let r2: f64 = y.coords().iter().zip(c.coords()).map(|(a, b)| (a - b) * (a - b)).sum();
        scale * (-0.5 * r2).exp()
    })
    .with_sup_norm(scale.abs())
    .with_l2_norm(scale.abs() * std::f64::consts::PI.powf(0.25 * m))
}

/// Normalised ground state `π^{-m/4} e^{-|y|²/2}` of `−Δ/2 + |y|²/2`.
pub fn oscillator_ground_state(m: usize) -> Section {
    let a = std::f64::consts::PI.powf(-0.25 * m as f64);
    Section::real("groundstate", move |y: &Point| a * (-0.5 * y.coords().iter().map(|c| c * c).sum::<f64>()).exp())
        .with_sup_norm(a)
        .with_l2_norm(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_potential_parts() {
        let v = ScalarField::new("x", |p: &Point| p.coords()[0]);
        let pot = Potential::scalar(v, 2, KatoClass::Bounded, KatoClass::Bounded);
        let x = Point::intrinsic(&[-1.5]);
        let diff = pot.positive_part(&x) - pot.negative_part(&x) - pot.value(&x);
        assert!(diff.iter().all(|z| z.norm() < 1e-15));
        assert_eq!(pot.negative_norm(&x), 1.5);
        assert_eq!(pot.scalar_floor(&x), -1.5);
    }

    #[test]
    fn matrix_potential_floor_below_spectrum() {
        let pot = Potential::matrix(
            "m",
            2,
            |p: &Point| {
                let s = p.coords()[0];
                crate::linalg::real_matrix(2, &[s, 1.0, 1.0, -s])
            },
            KatoClass::Bounded,
            KatoClass::LocallyKato,
            vec![],
        )
        .unwrap();
        let x = Point::intrinsic(&[0.75]);
        let lmin = crate::linalg::lambda_min(&pot.value(&x));
        assert!((pot.scalar_floor(&x) - lmin).abs() < 1e-15);
        assert!((lmin + 1.25).abs() < 1e-12);
        assert!((pot.negative_norm(&x) - 1.25).abs() < 1e-12);
    }

    #[test]
    fn radial_sum_keeps_structure() {
        let c = Point::intrinsic(&[0.0, 0.0, 0.0]);
        let s = ScalarField::sum("s", &[coulomb(1.0, c), well(2.0, 0.5, c)]);
        let r = s.radial_structure().expect("radial");
        assert!(((r.profile)(0.25) - (4.0 - 2.0)).abs() < 1e-15);
        assert_eq!(s.singular_points().len(), 1);
    }

    #[test]
    fn one_form_pairing_on_circle() {
        let m = Manifold::circle(1.0).unwrap();
        let b = OneForm::constant(&[0.5]);
        let x = m.point(&[6.2]).unwrap();
        let y = m.point(&[0.1]).unwrap();
        let mid = m.geodesic_point(&x, &y, 0.5);
        let d = 0.1 + 2.0 * std::f64::consts::PI - 6.2;
        assert!((b.pair(&m, &x, &y, &mid) - 0.5 * d).abs() < 1e-12);
    }
}
