use std::fmt;

use thiserror::Error;

/// Which momentum is eliminated when restricting to an energy level.
///
/// The x-branch eliminates `p_x` and follows the axial family in the
/// `(x, p_x)` plane; the y-branch eliminates `p_y` and follows the family
/// in the `(y, p_y)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    X,
    Y,
}

impl Branch {
    pub const BOTH: [Branch; 2] = [Branch::X, Branch::Y];

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::X => "x",
            Branch::Y => "y",
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which hypothesis of the averaging theorem failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HypothesisFlag {
    /// Upper-right `k x (n-k)` block of the gap matrix is not zero.
    UpperRightBlock,
    /// Lower-right block `Delta` is singular.
    SingularDelta,
}

impl fmt::Display for HypothesisFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HypothesisFlag::UpperRightBlock => f.write_str("upper-right block not zero"),
            HypothesisFlag::SingularDelta => f.write_str("det(Delta) vanishes"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{branch}-branch: state outside the energy shell (radicand {radicand:e})")]
    OutsideEnergyShell { branch: Branch, radicand: f64 },

    #[error("{branch}-branch: first-order expansion singular (zeroth-order radicand {radicand:e})")]
    ExpansionSingular { branch: Branch, radicand: f64 },

    #[error("{branch}-branch: reduced field evaluated at the chart boundary (radicand {radicand:e})")]
    ChartBoundary { branch: Branch, radicand: f64 },

    #[error("family anchor inconsistent with energy level (mismatch {mismatch:e})")]
    InconsistentAnchor { mismatch: f64 },

    #[error("{branch}-branch: fundamental matrix singular for zero-momentum anchor")]
    ChartSingular { branch: Branch },

    #[error("resonant orbit family requires rational q, got q = {q}")]
    ResonanceRequired { q: f64 },

    #[error("averaging hypothesis violated: {flag} (det Delta = {det:e})")]
    HypothesisViolated { flag: HypothesisFlag, det: f64 },

    #[error("resonance: {0}")]
    Resonance(String),

    #[error("quadrature integrity: {0}")]
    QuadratureIntegrity(String),

    #[error("integration failed at t = {t}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("no section crossing within t = {t_max}")]
    NoReturn { t_max: f64 },

    #[error("Newton iteration did not converge after {iterations} iterations (residuals {history:?})")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("period oracle domain: {0}")]
    OracleDomain(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
