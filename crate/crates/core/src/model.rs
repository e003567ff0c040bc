//! The quartic galactic Hamiltonian
//!
//! ```text
//! H = (p_x^2 + x^2)/2 + (p_y^2 + y^2)/(2q) + eps (a x^4 + b x^2 y^2 + c y^4)
//! ```
//!
//! With `eps = 1` this is the physical (unscaled) Hamiltonian. Substituting
//! `(X, Y, P_X, P_Y) = sqrt(eps) (x, y, p_x, p_y)` moves the quartic term to
//! order `eps`, which is the form the averaging machinery works with. Both
//! readings share the functions in this module; [`PhaseState`] carries no
//! flag saying which coordinates it holds.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub q: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, c: f64, q: f64) -> Result<Self> {
        let params = Self { a, b, c, q };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite() && self.c.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "quartic coefficients must be finite (a={}, b={}, c={})",
                self.a, self.b, self.c
            )));
        }
        if !(self.q.is_finite() && self.q > 0.0) {
            return Err(Error::InvalidParams(format!("q must be positive, got {}", self.q)));
        }
        Ok(())
    }

    /// `a x^4 + b x^2 y^2 + c y^4`.
    #[inline]
    pub fn quartic(&self, x: f64, y: f64) -> f64 {
        let (x2, y2) = (x * x, y * y);
        self.a * x2 * x2 + self.b * x2 * y2 + self.c * y2 * y2
    }
}

/// Canonical point `(x, y, p_x, p_y)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhaseState {
    pub x: f64,
    pub y: f64,
    pub px: f64,
    pub py: f64,
}

impl PhaseState {
    pub const ORIGIN: PhaseState = PhaseState { x: 0.0, y: 0.0, px: 0.0, py: 0.0 };

    pub const fn new(x: f64, y: f64, px: f64, py: f64) -> Self {
        Self { x, y, px, py }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.px, self.py]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self::new(s[0], s[1], s[2], s[3])
    }

    pub fn to_vector(self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.px, self.py)
    }

    pub fn from_vector(v: &Vector4<f64>) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }

    pub fn distance(&self, other: &PhaseState) -> f64 {
        (self.to_vector() - other.to_vector()).norm()
    }
}

/// A positive energy level `H = h`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EnergyLevel(f64);

impl EnergyLevel {
    pub fn new(h: f64) -> Result<Self> {
        if h.is_finite() && h > 0.0 {
            Ok(Self(h))
        } else {
            Err(Error::Domain(format!("energy level must be positive, got {h}")))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

pub fn energy(params: &ModelParams, eps: f64, s: &PhaseState) -> f64 {
    0.5 * (s.px * s.px + s.x * s.x) + (s.py * s.py + s.y * s.y) / (2.0 * params.q) + eps * params.quartic(s.x, s.y)
}

pub fn vector_field(params: &ModelParams, eps: f64, s: &PhaseState) -> Vector4<f64> {
    let mut out = [0.0; 4];
    field_into(params, eps, &s.to_array(), &mut out);
    Vector4::from(out)
}

/// Slice form of [`vector_field`], used by the integrator hot loop.
#[inline]
pub fn field_into(params: &ModelParams, eps: f64, s: &[f64], out: &mut [f64]) {
    let ModelParams { a, b, c, q } = *params;
    let (x, y, px, py) = (s[0], s[1], s[2], s[3]);
    out[0] = px;
    out[1] = py / q;
    out[2] = -x - eps * (4.0 * a * x * x * x + 2.0 * b * x * y * y);
    out[3] = -y / q - eps * (2.0 * b * x * x * y + 4.0 * c * y * y * y);
}

/// Analytic partial derivatives of [`vector_field`] with respect to
/// `(x, y, p_x, p_y)`.
pub fn jacobian(params: &ModelParams, eps: f64, s: &PhaseState) -> Matrix4<f64> {
    let mut m = Matrix4::zeros();
    jacobian_into(params, eps, &s.to_array(), m.as_mut_slice());
    m
}

/// Column-major slice form of [`jacobian`].
#[inline]
pub fn jacobian_into(params: &ModelParams, eps: f64, s: &[f64], out: &mut [f64]) {
    let ModelParams { a, b, c, q } = *params;
    let (x, y) = (s[0], s[1]);
    let cross = -eps * 4.0 * b * x * y;
    out.iter_mut().for_each(|v| *v = 0.0);
    // column 0: d/dx
    out[2] = -1.0 - eps * (12.0 * a * x * x + 2.0 * b * y * y);
    out[3] = cross;
    // column 1: d/dy
    out[4 + 2] = cross;
    out[4 + 3] = -1.0 / q - eps * (2.0 * b * x * x + 12.0 * c * y * y);
    // column 2: d/dp_x
    out[8] = 1.0;
    // column 3: d/dp_y
    out[12 + 1] = 1.0 / q;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleDirection {
    /// Divide by `sqrt(eps)`: physical to averaging coordinates.
    ToScaled,
    /// Multiply by `sqrt(eps)`: averaging to physical coordinates.
    ToOriginal,
}

pub fn rescale(s: &PhaseState, eps: f64, direction: RescaleDirection) -> Result<PhaseState> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("rescaling needs eps > 0, got {eps}")));
    }
    let factor = match direction {
        RescaleDirection::ToOriginal => eps.sqrt(),
        RescaleDirection::ToScaled => 1.0 / eps.sqrt(),
    };
    Ok(PhaseState::new(s.x * factor, s.y * factor, s.px * factor, s.py * factor))
}
