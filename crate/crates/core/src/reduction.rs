//! Restriction of the scaled system to an energy level.
//!
//! On `H = h` one momentum is eliminated through a square root, leaving a
//! three-dimensional system `r' = F0(r) + eps F1(r) + O(eps^2)`.
//!
//! * x-branch: eliminates `p_x`, state order `(x, y, p_y)`.
//! * y-branch: eliminates `p_y`, state order `(y, x, p_x)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Branch, Error, Result};
use crate::model::{EnergyLevel, ModelParams, PhaseState};

/// Radicands below this are treated as the chart boundary by the reduced
/// fields.
pub const CHART_GUARD: f64 = 1e-10;

/// Anchors must reproduce the energy level to this accuracy.
pub const ANCHOR_TOL: f64 = 1e-12;

/// A point of the reduced chart. Coordinate order depends on the branch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ReducedState(pub [f64; 3]);

impl ReducedState {
    pub const fn new(r0: f64, r1: f64, r2: f64) -> Self {
        Self([r0, r1, r2])
    }

    /// Drop the eliminated momentum from a full phase-space point.
    pub fn from_phase(branch: Branch, s: &PhaseState) -> Self {
        match branch {
            Branch::X => Self::new(s.x, s.y, s.py),
            Branch::Y => Self::new(s.y, s.x, s.px),
        }
    }

    /// Re-insert the eliminated momentum.
    pub fn to_phase(&self, branch: Branch, momentum: f64) -> PhaseState {
        let [r0, r1, r2] = self.0;
        match branch {
            Branch::X => PhaseState::new(r0, r1, momentum, r2),
            Branch::Y => PhaseState::new(r1, r0, r2, momentum),
        }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::from(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootSign {
    Plus,
    Minus,
}

impl RootSign {
    fn apply(self, v: f64) -> f64 {
        match self {
            RootSign::Plus => v,
            RootSign::Minus => -v,
        }
    }
}

/// Quadratic part of the radicand (no quartic correction), parametrised by
/// the doubled branch energy: `2h` on the x-branch, `2qh` on the y-branch.
fn zeroth_radicand_from(branch: Branch, two_level: f64, q: f64, r: &ReducedState) -> f64 {
    let [r0, r1, r2] = r.0;
    match branch {
        Branch::X => two_level - r0 * r0 - (r1 * r1 + r2 * r2) / q,
        Branch::Y => two_level - q * (r2 * r2 + r1 * r1) - r0 * r0,
    }
}

fn doubled_level(branch: Branch, h: f64, q: f64) -> f64 {
    match branch {
        Branch::X => 2.0 * h,
        Branch::Y => 2.0 * q * h,
    }
}

/// Quartic potential at the reduced point.
fn quartic_at(branch: Branch, params: &ModelParams, r: &ReducedState) -> f64 {
    let [r0, r1, _] = r.0;
    match branch {
        Branch::X => params.quartic(r0, r1),
        Branch::Y => params.quartic(r1, r0),
    }
}

/// Exact radicand of the eliminated momentum, quartic terms included.
pub fn exact_radicand(branch: Branch, h: EnergyLevel, params: &ModelParams, eps: f64, r: &ReducedState) -> f64 {
    let zeroth = zeroth_radicand_from(branch, doubled_level(branch, h.value(), params.q), params.q, r);
    let quartic = 2.0 * eps * quartic_at(branch, params, r);
    match branch {
        Branch::X => zeroth - quartic,
        Branch::Y => zeroth - params.q * quartic,
    }
}

pub fn eliminate_momentum(
    branch: Branch,
    h: EnergyLevel,
    params: &ModelParams,
    eps: f64,
    r: &ReducedState,
    sign: RootSign,
) -> Result<f64> {
    let radicand = exact_radicand(branch, h, params, eps, r);
    if radicand < 0.0 || radicand.is_nan() {
        return Err(Error::OutsideEnergyShell { branch, radicand });
    }
    Ok(sign.apply(radicand.sqrt()))
}

/// `(zeroth, first)` coefficients of the eliminated momentum expanded in
/// `eps` about zero (plus sign).
pub fn first_order_expansion(
    branch: Branch,
    h: EnergyLevel,
    params: &ModelParams,
    r: &ReducedState,
) -> Result<(f64, f64)> {
    let radicand = zeroth_radicand_from(branch, doubled_level(branch, h.value(), params.q), params.q, r);
    if !(radicand > 0.0) {
        return Err(Error::ExpansionSingular { branch, radicand });
    }
    let root = radicand.sqrt();
    let quartic = quartic_at(branch, params, r);
    let first = match branch {
        Branch::X => -quartic / root,
        Branch::Y => -params.q * quartic / root,
    };
    Ok((root, first))
}

/// The reduced unperturbed and perturbation fields `F0`, `F1` of one branch
/// on a fixed energy level.
///
/// `F1` is the first-order term, so `F0 + eps F1` agrees with the exact
/// reduced flow up to `O(eps^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchFields {
    pub branch: Branch,
    pub h: EnergyLevel,
    pub params: ModelParams,
    /// `x0^2 + p_x0^2` (x-branch) or `y0^2 + p_y0^2` (y-branch).
    two_level: f64,
}

impl BranchFields {
    /// Builds the fields from an anchor `(amplitude, momentum)` of the
    /// unperturbed family; the anchor fixes the energy level.
    pub fn new(branch: Branch, h: EnergyLevel, params: &ModelParams, anchor: (f64, f64)) -> Result<Self> {
        params.validate()?;
        let (amp, mom) = anchor;
        let two_level = amp * amp + mom * mom;
        let anchored_h = match branch {
            Branch::X => two_level / 2.0,
            Branch::Y => two_level / (2.0 * params.q),
        };
        let mismatch = (anchored_h - h.value()).abs();
        if mismatch > ANCHOR_TOL * (1.0 + h.value()) {
            return Err(Error::InconsistentAnchor { mismatch });
        }
        Ok(Self { branch, h, params: *params, two_level })
    }

    /// Fields anchored at the family point with zero amplitude.
    pub fn at_level(branch: Branch, h: EnergyLevel, params: &ModelParams) -> Result<Self> {
        let mom = doubled_level(branch, h.value(), params.q).sqrt();
        Self::new(branch, h, params, (0.0, mom))
    }

    pub fn zeroth_radicand(&self, r: &ReducedState) -> f64 {
        zeroth_radicand_from(self.branch, self.two_level, self.params.q, r)
    }

    fn guarded_root(&self, r: &ReducedState) -> Result<f64> {
        let radicand = self.zeroth_radicand(r);
        if !(radicand >= CHART_GUARD) {
            return Err(Error::ChartBoundary { branch: self.branch, radicand });
        }
        Ok(radicand.sqrt())
    }

    /// `F0` with the plus-sign root.
    pub fn unperturbed(&self, r: &ReducedState) -> Result<Vector3<f64>> {
        let root = self.guarded_root(r)?;
        Ok(self.unperturbed_with_root(r, root))
    }

    /// `F0` with a caller-supplied value for the root. Along an unperturbed
    /// orbit the eliminated momentum changes sign; the averaging engine
    /// passes the continued (signed) momentum here.
    pub fn unperturbed_with_root(&self, r: &ReducedState, root: f64) -> Vector3<f64> {
        let q = self.params.q;
        let [_, r1, r2] = r.0;
        match self.branch {
            Branch::X => Vector3::new(root, r2 / q, -r1 / q),
            Branch::Y => Vector3::new(root / q, r2, -r1),
        }
    }

    /// `F1` with the plus-sign root.
    pub fn perturbation(&self, r: &ReducedState) -> Result<Vector3<f64>> {
        let root = self.guarded_root(r)?;
        Ok(self.perturbation_with_root(r, root))
    }

    pub fn perturbation_with_root(&self, r: &ReducedState, root: f64) -> Vector3<f64> {
        let ModelParams { a, b, c, .. } = self.params;
        let [r0, r1, _] = r.0;
        let quartic = quartic_at(self.branch, &self.params, r);
        match self.branch {
            // r = (x, y, p_y)
            Branch::X => Vector3::new(-quartic / root, 0.0, -(2.0 * b * r0 * r0 * r1 + 4.0 * c * r1 * r1 * r1)),
            // r = (y, x, p_x)
            Branch::Y => Vector3::new(-quartic / root, 0.0, -(4.0 * a * r1 * r1 * r1 + 2.0 * b * r1 * r0 * r0)),
        }
    }

    /// `F0 + eps F1`.
    pub fn field(&self, eps: f64, r: &ReducedState) -> Result<Vector3<f64>> {
        let root = self.guarded_root(r)?;
        Ok(self.unperturbed_with_root(r, root) + eps * self.perturbation_with_root(r, root))
    }

    /// Exact derivative of `F0` with respect to the reduced state.
    pub fn unperturbed_jacobian(&self, r: &ReducedState) -> Result<Matrix3<f64>> {
        let root = self.guarded_root(r)?;
        Ok(self.unperturbed_jacobian_with_root(r, root))
    }

    pub fn unperturbed_jacobian_with_root(&self, r: &ReducedState, root: f64) -> Matrix3<f64> {
        let q = self.params.q;
        let [r0, r1, r2] = r.0;
        match self.branch {
            #[rustfmt::skip]
            Branch::X => Matrix3::new(
                -r0 / root, -r1 / (q * root), -r2 / (q * root),
                0.0, 0.0, 1.0 / q,
                0.0, -1.0 / q, 0.0,
            ),
            #[rustfmt::skip]
            Branch::Y => Matrix3::new(
                -r0 / (q * root), -r1 / root, -r2 / root,
                0.0, 0.0, 1.0,
                0.0, -1.0, 0.0,
            ),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::energy;
    use std::f64::consts::SQRT_2;

    fn level(h: f64) -> EnergyLevel {
        EnergyLevel::new(h).unwrap()
    }

    #[test]
    fn eliminate_examples() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let zero = ReducedState::default();
        let px = eliminate_momentum(Branch::X, level(0.5), &p, 0.0, &zero, RootSign::Plus).unwrap();
        assert_eq!(px, 1.0);
        let py = eliminate_momentum(Branch::Y, level(0.5), &p, 0.0, &zero, RootSign::Plus).unwrap();
        assert!((py - SQRT_2).abs() < 1e-15);
        let minus = eliminate_momentum(Branch::X, level(0.5), &p, 0.0, &zero, RootSign::Minus).unwrap();
        assert_eq!(minus, -1.0);
        match eliminate_momentum(Branch::X, level(0.5), &p, 0.0, &ReducedState::new(2.0, 0.0, 0.0), RootSign::Plus) {
            Err(Error::OutsideEnergyShell { branch: Branch::X, radicand }) => assert_eq!(radicand, -3.0),
            other => panic!("expected shell error, got {other:?}"),
        }
    }

    #[test]
    fn expansion_examples() {
        let free = ModelParams::new(0.0, 0.0, 0.0, 1.5).unwrap();
        assert_eq!(first_order_expansion(Branch::X, level(0.5), &free, &ReducedState::default()).unwrap(), (1.0, 0.0));
        let p = ModelParams::new(1.0, 0.0, 0.0, 1.5).unwrap();
        let x = 0.4;
        let (z, f) = first_order_expansion(Branch::X, level(0.5), &p, &ReducedState::new(x, 0.0, 0.0)).unwrap();
        let root = (1.0 - x * x).sqrt();
        assert!((z - root).abs() < 1e-15);
        assert!((f + x.powi(4) / root).abs() < 1e-15);
        assert!(matches!(
            first_order_expansion(Branch::X, level(0.5), &p, &ReducedState::new(1.0, 0.0, 0.0)),
            Err(Error::ExpansionSingular { .. })
        ));
    }

    /// Log-log slope of the truncation residual, computed against the exact
    /// elimination.
    fn richardson_slope(branch: Branch, r: ReducedState) -> f64 {
        let p = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        let h = level(0.5);
        let (z, f) = first_order_expansion(branch, h, &p, &r).unwrap();
        let eps = [1e-2, 1e-3, 1e-4];
        let pts: Vec<(f64, f64)> = eps
            .iter()
            .map(|&e| {
                let exact = eliminate_momentum(branch, h, &p, e, &r, RootSign::Plus).unwrap();
                (e.ln(), (exact - (z + e * f)).abs().ln())
            })
            .collect();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    }

    #[test]
    fn expansion_residual_is_second_order() {
        let s = richardson_slope(Branch::X, ReducedState::new(0.3, 0.2, 0.1));
        assert!((1.9..=2.1).contains(&s), "slope {s}");
        let s = richardson_slope(Branch::Y, ReducedState::new(0.3, 0.2, 0.1));
        assert!((1.9..=2.1).contains(&s), "slope {s}");
    }

    #[test]
    fn branch_field_examples() {
        let p = ModelParams::new(2.0, 0.5, -1.0, 1.7).unwrap();
        let fx = BranchFields::new(Branch::X, level(0.5), &p, (0.0, 1.0)).unwrap();
        assert_eq!(fx.unperturbed(&ReducedState::default()).unwrap(), Vector3::new(1.0, 0.0, 0.0));
        let x = 0.6;
        let f1 = fx.perturbation(&ReducedState::new(x, 0.0, 0.0)).unwrap();
        let root = (1.0 - x * x).sqrt();
        assert!((f1[0] + 2.0 * x.powi(4) / root).abs() < 1e-15);
        assert_eq!((f1[1], f1[2]), (0.0, 0.0));

        let fy = BranchFields::at_level(Branch::Y, level(0.5), &p).unwrap();
        let r = ReducedState::new(0.4, 0.2, -0.3);
        let f0 = fy.unperturbed(&r).unwrap();
        assert_eq!(f0[1], -0.3);
        assert_eq!(f0[2], -0.2);
        let full = fy.field(0.0, &r).unwrap();
        assert_eq!(full, f0);
    }

    #[test]
    fn inconsistent_anchor_rejected() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        assert!(matches!(
            BranchFields::new(Branch::X, level(0.5), &p, (0.6, 0.9)),
            Err(Error::InconsistentAnchor { .. })
        ));
        assert!(BranchFields::new(Branch::X, level(0.5), &p, (0.6, 0.8)).is_ok());
        assert!(BranchFields::new(Branch::Y, level(0.5), &p, (1.0, 1.0)).is_ok());
    }

    #[test]
    fn chart_boundary_is_refused() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let fx = BranchFields::at_level(Branch::X, level(0.5), &p).unwrap();
        assert!(matches!(fx.unperturbed(&ReducedState::new(1.0, 0.0, 0.0)), Err(Error::ChartBoundary { .. })));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        for branch in Branch::BOTH {
            let fields = BranchFields::at_level(branch, level(0.5), &p).unwrap();
            let r = ReducedState::new(0.3, -0.2, 0.25);
            let jac = fields.unperturbed_jacobian(&r).unwrap();
            let step = 1e-6;
            for j in 0..3 {
                let mut hi = r;
                let mut lo = r;
                hi.0[j] += step;
                lo.0[j] -= step;
                let fd = (fields.unperturbed(&hi).unwrap() - fields.unperturbed(&lo).unwrap()) / (2.0 * step);
                for i in 0..3 {
                    assert!((jac[(i, j)] - fd[i]).abs() < 1e-8, "{branch} ({i},{j})");
                }
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shell_consistency(r0 in -0.6f64..0.6, r1 in -0.6f64..0.6, r2 in -0.6f64..0.6,
                                 eps in 0.0f64..0.1, h in 0.4f64..2.0, y_branch: bool) {
                let branch = if y_branch { Branch::Y } else { Branch::X };
                let p = ModelParams::new(1.0, -0.5, 0.7, SQRT_2).unwrap();
                let r = ReducedState::new(r0, r1, r2);
                let lvl = level(h);
                if let Ok(m) = eliminate_momentum(branch, lvl, &p, eps, &r, RootSign::Plus) {
                    let e = energy(&p, eps, &r.to_phase(branch, m));
                    prop_assert!((e - h).abs() <= 1e-13 * (1.0 + h), "{} vs {}", e, h);
                }
            }
        }
    }
}
