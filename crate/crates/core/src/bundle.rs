//! Hermitian vector bundles with a metric connection, discretised by
//! per-step parallel transport along geodesic steps.
//!
//! For a step `x_k → x_{k+1}` the transport `T_k` maps fiber coordinates at
//! `x_{k+1}` back to fiber coordinates at `x_k`. The accumulated product
//! `P_k = T_0 ⋯ T_{k-1}` is the inverse stochastic parallel transport
//! `(//_{t_k})^{-1}` written in the frame at the start point.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::OneForm;
use crate::geometry::{Manifold, Point};
use crate::linalg::{self, CMatrix, CVector, C64};

#[derive(Clone, Debug)]
pub enum Connection {
    /// Product bundle with the trivial connection.
    Trivial,
    /// Line bundle with connection 1-form `-iβ`; transport along a step is
    /// the phase `e^{iβ(mid)[Δx]}`.
    Magnetic(OneForm),
    /// Product bundle on a flat model with constant skew-Hermitian connection
    /// coefficients `A_j`; transport is `exp(Σ_j A_j Δx^j)`.
    Gauge(Vec<CMatrix>),
    /// Complexified tangent bundle with the Levi-Civita connection.
    LeviCivita,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    rank: usize,
    connection: Connection,
}

impl fmt::Display for Bundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.connection {
            Connection::Trivial => write!(f, "trivial(d={})", self.rank),
            Connection::Magnetic(b) => write!(f, "magnetic({})", b.name()),
            Connection::Gauge(_) => write!(f, "gauge(d={})", self.rank),
            Connection::LeviCivita => write!(f, "levicivita(d={})", self.rank),
        }
    }
}

impl Bundle {
    pub fn trivial(rank: usize) -> Result<Bundle> {
        check_rank(rank)?;
        Ok(Bundle { rank, connection: Connection::Trivial })
    }

    pub fn magnetic(beta: OneForm) -> Bundle {
        Bundle { rank: 1, connection: Connection::Magnetic(beta) }
    }

    pub fn gauge(model: &Manifold, generators: Vec<CMatrix>) -> Result<Bundle> {
        if !model.is_flat() {
            return Err(Error::invalid("bundle", "gauge connections need a flat model"));
        }
        if generators.len() != model.dim() {
            return Err(Error::invalid("bundle", format!("expected {} connection coefficients", model.dim())));
        }
        let rank = generators[0].nrows();
        check_rank(rank)?;
        for a in &generators {
            if a.nrows() != rank || a.ncols() != rank {
                return Err(Error::invalid("bundle", "connection coefficients must share one square shape"));
            }
            let skew = (a + a.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if skew > 1e-12 {
                return Err(Error::invalid("bundle", "connection coefficients must be skew-Hermitian"));
            }
        }
        Ok(Bundle { rank, connection: Connection::Gauge(generators) })
    }

    pub fn levi_civita(model: &Manifold) -> Result<Bundle> {
        check_rank(model.dim())?;
        Ok(Bundle { rank: model.dim(), connection: Connection::LeviCivita })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn connection(&self) -> &Connection {
        &self.connection
    }

    pub fn is_trivial(&self) -> bool {
        matches!(self.connection, Connection::Trivial)
    }

    /// Check that the bundle can live on `model`.
    pub fn check_model(&self, model: &Manifold) -> Result<()> {
        match &self.connection {
            Connection::LeviCivita if self.rank != model.dim() => {
                Err(Error::invalid("bundle", "Levi-Civita bundle rank must equal the dimension"))
            }
            Connection::Gauge(g) if g.len() != model.dim() || !model.is_flat() => {
                Err(Error::invalid("bundle", "gauge bundle does not match the model"))
            }
            _ => Ok(()),
        }
    }

    /// Transport `T_k` for the geodesic step `from → to`.
    pub fn step_transport(&self, model: &Manifold, from: &Point, to: &Point) -> StepTransport {
        match &self.connection {
            Connection::Trivial => StepTransport::Identity,
            Connection::Magnetic(beta) => {
                let mid = model.geodesic_point(from, to, 0.5);
                StepTransport::Phase(beta.pair(model, from, to, &mid))
            }
            Connection::Gauge(gens) => {
                let d = model.chart_delta(from, to);
                let mut a = CMatrix::zeros(self.rank, self.rank);
                for (j, g) in gens.iter().enumerate() {
                    a += g * C64::new(d[j], 0.0);
                }
                StepTransport::Matrix(linalg::expm(&a))
            }
            Connection::LeviCivita => {
                if model.is_flat() {
                    return StepTransport::Identity;
                }
                let m = model.transport_frame(from, to);
                let d = self.rank;
                StepTransport::Matrix(CMatrix::from_fn(d, d, |a, b| C64::new(m[a][b], 0.0)))
            }
        }
    }
}

fn check_rank(rank: usize) -> Result<()> {
    if rank == 0 || rank > linalg::MAX_RANK {
        Err(Error::UnsupportedRank(rank))
    } else {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub enum StepTransport {
    Identity,
    Phase(f64),
    Matrix(CMatrix),
}

impl StepTransport {
    pub fn matrix(&self, d: usize) -> CMatrix {
        match self {
            StepTransport::Identity => linalg::identity(d),
            StepTransport::Phase(th) => CMatrix::from_element(1, 1, C64::from_polar(1.0, *th)),
            StepTransport::Matrix(m) => m.clone(),
        }
    }
}

/// Accumulated transport `P_k = T_0 ⋯ T_{k-1}`.
#[derive(Clone, Debug)]
pub enum Transport {
    Identity(usize),
    /// Rank one, `P = e^{iθ}` with the unwrapped total phase `θ`.
    Phase(f64),
    Matrix(CMatrix),
}

impl Transport {
    pub fn identity(bundle: &Bundle) -> Transport {
        match bundle.connection {
            Connection::Trivial => Transport::Identity(bundle.rank),
            Connection::Magnetic(_) => Transport::Phase(0.0),
            _ => Transport::Matrix(linalg::identity(bundle.rank)),
        }
    }

    /// `P ← P · T`.
    pub fn push(&mut self, step: &StepTransport) {
        match (self, step) {
            (_, StepTransport::Identity) => {}
            (Transport::Phase(th), StepTransport::Phase(d)) => *th += d,
            (Transport::Matrix(p), StepTransport::Matrix(t)) => *p = &*p * t,
            (me, s) => {
                let d = me.rank();
                *me = Transport::Matrix(me.matrix() * s.matrix(d));
            }
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Transport::Identity(d) => *d,
            Transport::Phase(_) => 1,
            Transport::Matrix(m) => m.nrows(),
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Transport::Identity(_))
    }

    pub fn matrix(&self) -> CMatrix {
        match self {
            Transport::Identity(d) => linalg::identity(*d),
            Transport::Phase(th) => CMatrix::from_element(1, 1, C64::from_polar(1.0, *th)),
            Transport::Matrix(m) => m.clone(),
        }
    }

    /// `P v`: fiber coordinates at the current point pulled back to the start.
    pub fn apply(&self, v: &CVector) -> CVector {
        match self {
            Transport::Identity(_) => v.clone(),
            Transport::Phase(th) => v * C64::from_polar(1.0, *th),
            Transport::Matrix(m) => m * v,
        }
    }

    /// `P A P*`, conjugating a fiber endomorphism at the current point into
    /// the start fiber.
    pub fn conjugate(&self, a: &CMatrix) -> CMatrix {
        match self {
            Transport::Identity(_) | Transport::Phase(_) => a.clone(),
            Transport::Matrix(m) => m * a * m.adjoint(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauge_transport_is_unitary() {
        let m = Manifold::euclidean(2).unwrap();
        let a = linalg::real_matrix(2, &[0.0, 1.0, -1.0, 0.0]);
        let b = CMatrix::from_fn(2, 2, |i, j| if i == j { C64::new(0.0, 0.3) } else { C64::new(0.0, 0.0) });
        let bundle = Bundle::gauge(&m, vec![a, b]).unwrap();
        let t = bundle.step_transport(&m, &Point::intrinsic(&[0.0, 0.0]), &Point::intrinsic(&[0.2, -0.1]));
        assert!(linalg::unitarity_defect(&t.matrix(2)) < 1e-12);
    }

    #[test]
    fn gauge_rejects_hermitian_coefficients() {
        let m = Manifold::euclidean(1).unwrap();
        assert!(Bundle::gauge(&m, vec![linalg::identity(2)]).is_err());
    }

    #[test]
    fn phase_composition_accumulates_angle() {
        let mut p = Transport::Phase(0.0);
        p.push(&StepTransport::Phase(0.5));
        p.push(&StepTransport::Phase(-0.2));
        match p {
            Transport::Phase(th) => assert!((th - 0.3).abs() < 1e-15),
            _ => panic!(),
        }
    }
}
