//! Mechanical Hamiltonians `drift y_1 + 1/2 <A y, y> - V(x)` on `T^2 x R^2`,
//! optionally with a time-periodic remainder, and their Lagrangians.

use core::f64::consts::PI;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Matrix4, Vector2};
use serde::{Deserialize, Serialize};

use crate::fourier::{FourierError, FourierField};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SystemError {
    #[error("kinetic matrix must be symmetric positive definite")]
    KineticNotPositive,
    #[error("potential must be a field on the 2-torus")]
    PotentialDimension,
    #[error("remainder must be a field on the 3-torus (x1, x2, fast angle)")]
    RemainderDimension,
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Phase-space point `(x1, x2, y1, y2)`.
pub type State = [f64; 4];

/// Symmetric positive definite kinetic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct KineticMatrix(Matrix2<f64>);

impl KineticMatrix {
    pub fn new(rows: [[f64; 2]; 2]) -> Result<Self, SystemError> {
        let m = Matrix2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1]);
        let symmetric = (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-14 * m.amax().max(1.0);
        let det = m.determinant();
        if !(symmetric && m[(0, 0)] > 0.0 && det > 0.0 && m.iter().all(|v| v.is_finite())) {
            return Err(SystemError::KineticNotPositive);
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix2::identity())
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Matrix2<f64> {
        self.0.try_inverse().unwrap_or_else(Matrix2::identity)
    }

    pub fn rows(&self) -> [[f64; 2]; 2] {
        [
            [self.0[(0, 0)], self.0[(0, 1)]],
            [self.0[(1, 0)], self.0[(1, 1)]],
        ]
    }
}

impl TryFrom<[[f64; 2]; 2]> for KineticMatrix {
    type Error = SystemError;
    fn try_from(rows: [[f64; 2]; 2]) -> Result<Self, Self::Error> {
        Self::new(rows)
    }
}

impl From<KineticMatrix> for [[f64; 2]; 2] {
    fn from(k: KineticMatrix) -> Self {
        k.rows()
    }
}

/// Quintic smoothstep cutoff in `|y|`: one inside `inner`, zero beyond `outer`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mollifier {
    pub inner: f64,
    pub outer: f64,
}

impl Mollifier {
    /// Weight and its derivative with respect to `|y|`.
    pub fn weight(&self, r: f64) -> (f64, f64) {
        if r <= self.inner {
            return (1.0, 0.0);
        }
        if r >= self.outer {
            return (0.0, 0.0);
        }
        let w = self.outer - self.inner;
        let s = (r - self.inner) / w;
        let p = 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s);
        let dp = -30.0 * s * s * (1.0 - s) * (1.0 - s) / w;
        (p, dp)
    }
}

/// Remainder `amplitude * R(x1, x2, rate * t + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Remainder {
    field: FourierField,
    pub amplitude: f64,
    pub rate: f64,
    pub phase: f64,
    pub mollifier: Option<Mollifier>,
}

impl Remainder {
    pub fn new(field: FourierField, amplitude: f64, rate: f64) -> Result<Self, SystemError> {
        if field.dim() != 3 {
            return Err(SystemError::RemainderDimension);
        }
        Ok(Self {
            field,
            amplitude,
            rate,
            phase: 0.0,
            mollifier: None,
        })
    }

    pub fn field(&self) -> &FourierField {
        &self.field
    }

    /// Fast angle at time `t`.
    pub fn angle(&self, t: f64) -> f64 {
        self.rate * t + self.phase
    }

    /// Period of the forcing in `t`, infinite for a frozen remainder.
    pub fn period(&self) -> f64 {
        if self.rate == 0.0 {
            f64::INFINITY
        } else {
            2.0 * PI / self.rate.abs()
        }
    }
}

/// Hamiltonian `drift * y1 + 1/2 <A y, y> - V(x) [+ remainder]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanicalSystem {
    kinetic: KineticMatrix,
    kinetic_inv: Matrix2<f64>,
    potential: FourierField,
    pub drift: f64,
    remainder: Option<Remainder>,
}

impl MechanicalSystem {
    pub fn new(kinetic: KineticMatrix, potential: FourierField) -> Result<Self, SystemError> {
        if potential.dim() != 2 {
            return Err(SystemError::PotentialDimension);
        }
        Ok(Self {
            kinetic_inv: kinetic.inverse(),
            kinetic,
            potential,
            drift: 0.0,
            remainder: None,
        })
    }

    pub fn with_drift(mut self, drift: f64) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_remainder(mut self, remainder: Remainder) -> Self {
        self.remainder = Some(remainder);
        self
    }

    /// Same system with the remainder removed.
    pub fn unperturbed(&self) -> Self {
        Self {
            remainder: None,
            ..self.clone()
        }
    }

    pub fn kinetic(&self) -> &KineticMatrix {
        &self.kinetic
    }

    pub fn kinetic_inverse(&self) -> &Matrix2<f64> {
        &self.kinetic_inv
    }

    pub fn potential(&self) -> &FourierField {
        &self.potential
    }

    pub fn remainder(&self) -> Option<&Remainder> {
        self.remainder.as_ref()
    }

    pub fn is_autonomous(&self) -> bool {
        self.remainder
            .as_ref()
            .is_none_or(|r| r.rate == 0.0 || r.amplitude == 0.0)
    }

    fn remainder_terms(&self, t: f64, z: &State) -> Option<RemainderJet> {
        let r = self.remainder.as_ref()?;
        if r.amplitude == 0.0 {
            return None;
        }
        let tau = r.angle(t);
        let j = r.field.jet2(&[z[0], z[1], tau]);
        let (w, dw) = match &r.mollifier {
            Some(m) => m.weight((z[2] * z[2] + z[3] * z[3]).sqrt()),
            None => (1.0, 0.0),
        };
        Some(RemainderJet {
            amp: r.amplitude,
            rate: r.rate,
            weight: w,
            dweight: dw,
            jet: j,
        })
    }

    /// Value of the Hamiltonian.
    pub fn hamiltonian(&self, t: f64, z: &State) -> f64 {
        let y = Vector2::new(z[2], z[3]);
        let mut h = self.drift * z[2] + 0.5 * y.dot(&(self.kinetic.0 * y))
            - self.potential.eval(&[z[0], z[1]]);
        if let Some(r) = self.remainder_terms(t, z) {
            h += r.amp * r.weight * r.jet.value;
        }
        h
    }

    /// Partial derivative of the Hamiltonian in time.
    pub fn time_derivative(&self, t: f64, z: &State) -> f64 {
        match self.remainder_terms(t, z) {
            Some(r) => r.amp * r.weight * r.rate * r.jet.grad[2],
            None => 0.0,
        }
    }

    /// Gradient of the Hamiltonian in `(x, y)`.
    pub fn hamiltonian_gradient(&self, t: f64, z: &State) -> State {
        let y = Vector2::new(z[2], z[3]);
        let ay = self.kinetic.0 * y;
        let gv = self.potential.gradient(&[z[0], z[1]]);
        let mut g = [-gv[0], -gv[1], ay.x + self.drift, ay.y];
        if let Some(r) = self.remainder_terms(t, z) {
            g[0] += r.amp * r.weight * r.jet.grad[0];
            g[1] += r.amp * r.weight * r.jet.grad[1];
            if r.dweight != 0.0 {
                let rr = (z[2] * z[2] + z[3] * z[3]).sqrt();
                g[2] += r.amp * r.jet.value * r.dweight * z[2] / rr;
                g[3] += r.amp * r.jet.value * r.dweight * z[3] / rr;
            }
        }
        g
    }

    /// Hamilton's equations `x' = dH/dy`, `y' = -dH/dx`.
    pub fn vector_field(&self, t: f64, z: &State) -> State {
        let g = self.hamiltonian_gradient(t, z);
        [g[2], g[3], -g[0], -g[1]]
    }

    /// Jacobian of the vector field. The mollifier's contribution to the
    /// Jacobian is neglected; it is only used away from its transition layer.
    pub fn jacobian(&self, t: f64, z: &State) -> Matrix4<f64> {
        let jv = self.potential.jet2(&[z[0], z[1]]);
        let a = self.kinetic.0;
        let mut vxx = Matrix2::new(jv.hess[0][0], jv.hess[0][1], jv.hess[1][0], jv.hess[1][1]);
        if let Some(r) = self.remainder_terms(t, z) {
            let s = r.amp * r.weight;
            vxx -= Matrix2::new(
                r.jet.hess[0][0],
                r.jet.hess[0][1],
                r.jet.hess[1][0],
                r.jet.hess[1][1],
            ) * s;
        }
        let mut m = Matrix4::zeros();
        m.fixed_view_mut::<2, 2>(0, 2).copy_from(&a);
        m.fixed_view_mut::<2, 2>(2, 0).copy_from(&vxx);
        m
    }

    /// Lagrangian `1/2 <A^{-1}(v - drift e1), v - drift e1> + V(x)` (no remainder).
    pub fn lagrangian(&self, x: [f64; 2], v: [f64; 2]) -> f64 {
        let w = Vector2::new(v[0] - self.drift, v[1]);
        0.5 * w.dot(&(self.kinetic_inv * w)) + self.potential.eval(&x)
    }

    /// Momentum conjugate to the velocity `v`.
    pub fn legendre(&self, v: [f64; 2]) -> [f64; 2] {
        let w = self.kinetic_inv * Vector2::new(v[0] - self.drift, v[1]);
        [w.x, w.y]
    }
}

struct RemainderJet {
    amp: f64,
    rate: f64,
    weight: f64,
    dweight: f64,
    jet: crate::fourier::Jet,
}

/// Standard symplectic form on `R^4` in `(x, y)` ordering.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    j
}

/// Pendulum in `x1` plus a weaker well in `x2`:
/// `V = (1 - cos x1) + well (1 - cos x2)`.
pub fn pendulum_and_well(well: f64) -> MechanicalSystem {
    let v = FourierField::constant(2, 1.0 + well)
        .and_then(|c| c.plus(&FourierField::cosine(2, [1, 0, 0], -1.0)?))
        .and_then(|c| c.plus(&FourierField::cosine(2, [0, 1, 0], -well)?))
        .expect("fixed modes are valid");
    MechanicalSystem::new(KineticMatrix::identity(), v).expect("identity is positive")
}
