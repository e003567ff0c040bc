//! Periodic orbits of a quartic galactic potential.
//!
//! The Hamiltonian `H = (p_x^2 + x^2)/2 + (p_y^2 + y^2)/(2q) + eps (a x^4 + b x^2 y^2 + c y^4)`
//! is reduced to a three-dimensional system on each energy level, the
//! first-order averaged function of the axial families is evaluated in
//! closed form and by quadrature, and its zeros are checked against
//! periodic orbits computed by shooting in the full system.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod averaging;
pub mod cli;
pub mod closedform;
pub mod error;
pub mod integrator;
pub mod model;
pub mod reduction;
pub mod resonance;
pub mod verify;

pub use error::{Branch, Error, HypothesisFlag, Result};
pub use model::{EnergyLevel, ModelParams, PhaseState};
