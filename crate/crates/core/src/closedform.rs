//! Closed-form objects of the unperturbed problem: the axial orbit families,
//! their fundamental matrices, the gap matrix `M^-1(0) - M^-1(T)`, and the
//! averaged function with its zeros.

use std::f64::consts::{PI, TAU};

use nalgebra::{Matrix2, Matrix3};

use crate::averaging::quadrature::Sinusoid;
use crate::error::{Branch, Error, Result};
use crate::model::{EnergyLevel, ModelParams, PhaseState};
use crate::reduction::ReducedState;
use crate::resonance;

/// Relative slack when checking that an anchor lies on its energy circle.
const ANCHOR_TOL: f64 = 1e-12;

/// A point on the energy circle of one axial family, with the family's
/// period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FamilyAnchor {
    pub branch: Branch,
    /// `x0` or `y0`.
    pub amplitude: f64,
    /// `p_x0` or `p_y0`.
    pub momentum: f64,
    pub h: EnergyLevel,
    pub q: f64,
}

/// Radius of the energy circle: `sqrt(2h)` or `sqrt(2qh)`.
pub fn circle_radius(branch: Branch, h: EnergyLevel, q: f64) -> f64 {
    match branch {
        Branch::X => (2.0 * h.value()).sqrt(),
        Branch::Y => (2.0 * q * h.value()).sqrt(),
    }
}

/// `2 pi` for the x-family, `2 pi q` for the y-family.
pub fn family_period(branch: Branch, q: f64) -> f64 {
    match branch {
        Branch::X => TAU,
        Branch::Y => TAU * q,
    }
}

impl FamilyAnchor {
    pub fn new(branch: Branch, amplitude: f64, momentum: f64, h: EnergyLevel, q: f64) -> Result<Self> {
        if !(q > 0.0) {
            return Err(Error::InvalidParams(format!("q must be positive, got {q}")));
        }
        let r2 = circle_radius(branch, h, q).powi(2);
        let mismatch = (amplitude * amplitude + momentum * momentum - r2).abs();
        if mismatch > ANCHOR_TOL * (1.0 + r2) {
            return Err(Error::InconsistentAnchor { mismatch });
        }
        Ok(Self { branch, amplitude, momentum, h, q })
    }

    /// Amplitude chart: `momentum = +sqrt(r^2 - alpha^2)`.
    pub fn from_amplitude(branch: Branch, alpha: f64, h: EnergyLevel, q: f64) -> Result<Self> {
        let r = circle_radius(branch, h, q);
        let rest = r * r - alpha * alpha;
        if rest < -4.0 * f64::EPSILON * r * r || alpha.is_nan() {
            return Err(Error::Domain(format!("amplitude {alpha} outside [-{r}, {r}]")));
        }
        Ok(Self { branch, amplitude: alpha, momentum: rest.max(0.0).sqrt(), h, q })
    }

    /// Angle chart: `(amplitude, momentum) = r (sin theta, cos theta)`.
    pub fn from_angle(branch: Branch, theta: f64, h: EnergyLevel, q: f64) -> Self {
        let r = circle_radius(branch, h, q);
        Self { branch, amplitude: r * theta.sin(), momentum: r * theta.cos(), h, q }
    }

    pub fn period(&self) -> f64 {
        family_period(self.branch, self.q)
    }

    /// Angular frequency of the family plane.
    pub fn omega(&self) -> f64 {
        match self.branch {
            Branch::X => 1.0,
            Branch::Y => 1.0 / self.q,
        }
    }

    /// Frequency of the transverse plane.
    fn transverse_omega(&self) -> f64 {
        match self.branch {
            Branch::X => 1.0 / self.q,
            Branch::Y => 1.0,
        }
    }

    /// The eliminated momentum along the orbit,
    /// `P(t) = momentum cos(w t) - amplitude sin(w t)`. It changes sign twice
    /// per period.
    pub fn momentum_sinusoid(&self) -> Sinusoid {
        Sinusoid { cos_coeff: self.momentum, sin_coeff: -self.amplitude, omega: self.omega() }
    }

    /// The family coordinate `amplitude cos(w t) + momentum sin(w t)`.
    pub fn position_sinusoid(&self) -> Sinusoid {
        Sinusoid { cos_coeff: self.amplitude, sin_coeff: self.momentum, omega: self.omega() }
    }

    /// Reduced-chart point of the unperturbed orbit at time `t`.
    pub fn reduced_state(&self, t: f64) -> ReducedState {
        ReducedState::new(self.position_sinusoid().eval(t), 0.0, 0.0)
    }

    /// Initial condition `z_alpha` in the full phase space.
    pub fn phase_state(&self) -> PhaseState {
        unperturbed_orbit(self, 0.0)
    }
}

/// Closed-form solution of the unperturbed linear system on the family plane.
pub fn unperturbed_orbit(anchor: &FamilyAnchor, t: f64) -> PhaseState {
    let pos = anchor.position_sinusoid().eval(t);
    let mom = anchor.momentum_sinusoid().eval(t);
    match anchor.branch {
        Branch::X => PhaseState::new(pos, 0.0, mom, 0.0),
        Branch::Y => PhaseState::new(0.0, pos, 0.0, mom),
    }
}

/// Period `2 pi r` of the four-dimensional family at rational `q = r/s`.
pub fn resonant_period(params: &ModelParams) -> Result<f64> {
    let ratio = resonance::detect_rational(params.q).ok_or(Error::ResonanceRequired { q: params.q })?;
    Ok(TAU * ratio.num as f64)
}

/// Unperturbed solution through an arbitrary initial point when `q` is
/// rational; every such solution is `2 pi r`-periodic.
pub fn resonant_orbit(params: &ModelParams, ic: &PhaseState, t: f64) -> Result<PhaseState> {
    resonant_period(params)?;
    let (c1, s1) = (t.cos(), t.sin());
    let (cq, sq) = ((t / params.q).cos(), (t / params.q).sin());
    Ok(PhaseState::new(ic.x * c1 + ic.px * s1, ic.y * cq + ic.py * sq, ic.px * c1 - ic.x * s1, ic.py * cq - ic.y * sq))
}

fn rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, -s, c)
}

fn assemble(corner: f64, block: Matrix2<f64>) -> Matrix3<f64> {
    let mut m = Matrix3::zeros();
    m[(0, 0)] = corner;
    m.fixed_view_mut::<2, 2>(1, 1).copy_from(&block);
    m
}

/// Fundamental matrix of the reduced variational equation along the family
/// orbit, normalised to the identity at `t = 0`.
pub fn analytic_fundamental(anchor: &FamilyAnchor, t: f64) -> Result<Matrix3<f64>> {
    if anchor.momentum == 0.0 {
        return Err(Error::ChartSingular { branch: anchor.branch });
    }
    let corner = anchor.momentum_sinusoid().eval(t) / anchor.momentum;
    Ok(assemble(corner, rotation(anchor.transverse_omega() * t)))
}

/// Inverse of [`analytic_fundamental`]. The corner entry
/// `momentum / P(t)` is finite for a zero-momentum anchor, so no error is
/// raised there; it is infinite where `P(t) = 0`.
pub fn analytic_fundamental_inverse(anchor: &FamilyAnchor, t: f64) -> Matrix3<f64> {
    let corner = anchor.momentum / anchor.momentum_sinusoid().eval(t);
    assemble(corner, rotation(anchor.transverse_omega() * t).transpose())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapMatrix {
    pub matrix: Matrix3<f64>,
    pub delta: Matrix2<f64>,
    pub det_delta: f64,
}

impl GapMatrix {
    pub fn from_matrix(matrix: Matrix3<f64>) -> Self {
        let delta: Matrix2<f64> = matrix.fixed_view::<2, 2>(1, 1).into_owned();
        Self { matrix, delta, det_delta: delta.determinant() }
    }

    /// Largest magnitude in the upper-right `1 x 2` block.
    pub fn upper_right_max(&self) -> f64 {
        self.matrix[(0, 1)].abs().max(self.matrix[(0, 2)].abs())
    }
}

/// Closed form of `M^-1(0) - M^-1(T)`. The transverse rotation angle over
/// one period is `2 pi / q` on the x-branch and `2 pi q` on the y-branch.
pub fn gap_matrix(branch: Branch, params: &ModelParams) -> GapMatrix {
    let half = match branch {
        Branch::X => PI / params.q,
        Branch::Y => PI * params.q,
    };
    let s = half.sin();
    let two_s2 = 2.0 * s * s;
    let cross = (2.0 * half).sin();
    let delta = Matrix2::new(two_s2, cross, -cross, two_s2);
    GapMatrix { matrix: assemble(0.0, delta), delta, det_delta: 4.0 * s * s }
}

/// `M^-1(0) - M^-1(T)` assembled by numerically inverting the analytic
/// fundamental matrix at both ends of the period.
pub fn gap_matrix_from_fundamental(anchor: &FamilyAnchor) -> Result<GapMatrix> {
    let invert = |t: f64| -> Result<Matrix3<f64>> {
        analytic_fundamental(anchor, t)?.try_inverse().ok_or(Error::ChartSingular { branch: anchor.branch })
    };
    Ok(GapMatrix::from_matrix(invert(0.0)? - invert(anchor.period())?))
}

/// Prefactor `K` with `f1 = K * momentum`: `3 a h` (x) or `3 c q^2 h` (y).
pub fn averaged_prefactor(branch: Branch, h: EnergyLevel, params: &ModelParams) -> f64 {
    match branch {
        Branch::X => 3.0 * params.a * h.value(),
        Branch::Y => 3.0 * params.c * params.q * params.q * h.value(),
    }
}

/// `3 a h sqrt(2h - alpha^2)` or `3 c h q^2 sqrt(2qh - alpha^2)`.
pub fn averaged_f_closed(branch: Branch, alpha: f64, h: EnergyLevel, params: &ModelParams) -> Result<f64> {
    let anchor = FamilyAnchor::from_amplitude(branch, alpha, h, params.q)?;
    Ok(averaged_prefactor(branch, h, params) * anchor.momentum)
}

/// The averaged function in the angle chart, `K r cos(theta)`.
pub fn averaged_f_closed_angle(branch: Branch, theta: f64, h: EnergyLevel, params: &ModelParams) -> f64 {
    averaged_prefactor(branch, h, params) * circle_radius(branch, h, params.q) * theta.cos()
}

/// `d/dtheta` of [`averaged_f_closed_angle`].
pub fn averaged_f_closed_angle_derivative(branch: Branch, theta: f64, h: EnergyLevel, params: &ModelParams) -> f64 {
    -averaged_prefactor(branch, h, params) * circle_radius(branch, h, params.q) * theta.sin()
}

/// The two zeros `+-r`. They are the turning points of one and the same
/// unperturbed orbit.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PredictedZeros {
    pub minus: f64,
    pub plus: f64,
    pub same_orbit: bool,
}

pub fn predicted_zeros(branch: Branch, h: EnergyLevel, params: &ModelParams) -> PredictedZeros {
    let r = circle_radius(branch, h, params.q);
    PredictedZeros { minus: -r, plus: r, same_orbit: true }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn level(h: f64) -> EnergyLevel {
        EnergyLevel::new(h).unwrap()
    }

    fn max_abs(m: &Matrix3<f64>) -> f64 {
        m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    #[test]
    fn orbit_examples() {
        let a = FamilyAnchor::new(Branch::X, 1.0, 0.0, level(0.5), 2.0).unwrap();
        assert_eq!(unperturbed_orbit(&a, 0.0), PhaseState::new(1.0, 0.0, 0.0, 0.0));
        let s = unperturbed_orbit(&a, FRAC_PI_2);
        assert!(s.distance(&PhaseState::new(0.0, 0.0, -1.0, 0.0)) < 1e-15);

        let q = 2.0;
        let b = FamilyAnchor::new(Branch::Y, 0.0, 1.0, level(0.25), q).unwrap();
        let s = unperturbed_orbit(&b, PI * q / 2.0);
        assert!((s.y - 1.0).abs() < 1e-15 && s.py.abs() < 1e-15);
        assert_eq!((s.x, s.px), (0.0, 0.0));
    }

    #[test]
    fn orbits_are_periodic() {
        for branch in Branch::BOTH {
            let a = FamilyAnchor::from_amplitude(branch, 0.3, level(0.7), SQRT_2).unwrap();
            for t in [0.0, 0.4, 1.9, 5.0] {
                let d = unperturbed_orbit(&a, t).distance(&unperturbed_orbit(&a, t + a.period()));
                assert!(d < 1e-14, "{branch} t={t}: {d}");
            }
        }
    }

    #[test]
    fn resonant_family_requires_rational_q() {
        let irrational = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        assert!(matches!(
            resonant_orbit(&irrational, &PhaseState::new(1.0, 1.0, 0.0, 0.0), 1.0),
            Err(Error::ResonanceRequired { .. })
        ));
        let p = ModelParams::new(1.0, 1.0, 1.0, 1.5).unwrap();
        let period = resonant_period(&p).unwrap();
        assert!((period - 3.0 * TAU).abs() < 1e-14);
        let ic = PhaseState::new(0.3, -0.4, 0.5, 0.2);
        let back = resonant_orbit(&p, &ic, period).unwrap();
        assert!(back.distance(&ic) < 1e-13);
    }

    #[test]
    fn fundamental_examples() {
        let a = FamilyAnchor::new(Branch::X, 0.6, 0.8, level(0.5), SQRT_2).unwrap();
        assert_eq!(analytic_fundamental(&a, 0.0).unwrap(), Matrix3::identity());
        let centred = FamilyAnchor::new(Branch::X, 0.0, 1.0, level(0.5), SQRT_2).unwrap();
        let t = 0.9;
        let m = analytic_fundamental(&centred, t).unwrap();
        let expected = assemble(t.cos(), rotation(t / SQRT_2));
        assert!(max_abs(&(m - expected)) < 1e-15);
        for t in [0.7, 2.0, 5.5] {
            let prod = analytic_fundamental(&a, t).unwrap() * analytic_fundamental_inverse(&a, t);
            assert!(max_abs(&(prod - Matrix3::identity())) < 1e-12, "t={t}");
        }
        let flat = FamilyAnchor::new(Branch::X, 1.0, 0.0, level(0.5), SQRT_2).unwrap();
        assert!(matches!(analytic_fundamental(&flat, 1.0), Err(Error::ChartSingular { .. })));
    }

    #[test]
    fn gap_determinant_examples() {
        let root2 = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        let gx = gap_matrix(Branch::X, &root2);
        assert!((gx.det_delta - 4.0 * (PI / SQRT_2).sin().powi(2)).abs() < 1e-15);
        assert!((gx.det_delta - 2.5325).abs() < 1e-4);
        let gy = gap_matrix(Branch::Y, &root2);
        assert!((gy.det_delta - 4.0 * (PI * SQRT_2).sin().powi(2)).abs() < 1e-14);
        assert!((gy.det_delta - 3.71643).abs() < 1e-5);
        let half = ModelParams::new(1.0, 1.0, 1.0, 0.5).unwrap();
        assert!(gap_matrix(Branch::X, &half).det_delta < 1e-30);
        assert_eq!(gx.upper_right_max(), 0.0);
        assert!((gx.delta.determinant() - gx.det_delta).abs() < 1e-14);
    }

    #[test]
    fn gap_matrix_matches_fundamental_route() {
        for q in [SQRT_2, (1.0 + 5f64.sqrt()) / 2.0, PI, 0.37] {
            let p = ModelParams::new(1.0, 1.0, 1.0, q).unwrap();
            for branch in Branch::BOTH {
                let a = FamilyAnchor::from_amplitude(branch, 0.2, level(0.5), q).unwrap();
                let numeric = gap_matrix_from_fundamental(&a).unwrap();
                let closed = gap_matrix(branch, &p);
                assert!(max_abs(&(numeric.matrix - closed.matrix)) < 1e-12, "{branch} q={q}");
                assert!((numeric.det_delta - closed.det_delta).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn averaged_closed_examples() {
        let p = ModelParams::new(2.0, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(averaged_f_closed(Branch::X, 0.0, level(0.5), &p).unwrap(), 3.0);
        assert_eq!(averaged_f_closed(Branch::X, 1.0, level(0.5), &p).unwrap(), 0.0);
        assert_eq!(averaged_f_closed(Branch::X, -1.0, level(0.5), &p).unwrap(), 0.0);
        let y = averaged_f_closed(Branch::Y, 0.0, level(0.5), &p).unwrap();
        assert!((y - 6.0 * SQRT_2).abs() < 1e-14);
        assert!(averaged_f_closed(Branch::X, 1.01, level(0.5), &p).is_err());
    }

    #[test]
    fn zeros_are_endpoints_of_the_amplitude_interval() {
        let p = ModelParams::new(1.0, 1.0, 1.0, 2.0).unwrap();
        let z = predicted_zeros(Branch::X, level(0.5), &p);
        assert_eq!((z.minus, z.plus), (-1.0, 1.0));
        let z = predicted_zeros(Branch::Y, level(0.5), &p);
        assert!((z.plus - SQRT_2).abs() < 1e-15 && z.same_orbit);
        let z = predicted_zeros(Branch::X, level(2.0), &p);
        assert_eq!(z.plus, 2.0);
        for branch in Branch::BOTH {
            let z = predicted_zeros(branch, level(0.8), &p);
            assert_eq!(averaged_f_closed(branch, z.plus, level(0.8), &p).unwrap(), 0.0);
            assert_eq!(averaged_f_closed(branch, z.minus, level(0.8), &p).unwrap(), 0.0);
        }
    }

    #[test]
    fn angle_chart_derivative_at_zeros() {
        let p = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        let d = averaged_f_closed_angle_derivative(Branch::X, FRAC_PI_2, level(0.5), &p);
        assert!((d + 1.5).abs() < 1e-15);
        let d = averaged_f_closed_angle_derivative(Branch::X, -FRAC_PI_2, level(0.5), &p);
        assert!((d - 1.5).abs() < 1e-15);
    }

    /// The analytic M(t) satisfies the reduced variational equation along
    /// the family; derivative by central differences.
    #[test]
    fn fundamental_solves_variational_equation() {
        use crate::reduction::BranchFields;
        let p = ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap();
        let h = level(0.5);
        for branch in Branch::BOTH {
            let r = circle_radius(branch, h, p.q);
            for alpha in [-0.9 * r, -0.3 * r, 0.0, 0.5 * r, 0.99 * r] {
                let anchor = FamilyAnchor::from_amplitude(branch, alpha, h, p.q).unwrap();
                if anchor.momentum.abs() < 0.1 * r {
                    continue;
                }
                let fields = BranchFields::new(branch, h, &p, (anchor.amplitude, anchor.momentum)).unwrap();
                let period = anchor.period();
                let mut checked = 0;
                for k in 0..50 {
                    let t = period * (k as f64 + 0.5) / 50.0;
                    let mom = anchor.momentum_sinusoid().eval(t);
                    if mom.abs() < 0.05 * r {
                        continue;
                    }
                    let step = 1e-5;
                    let dm = (analytic_fundamental(&anchor, t + step).unwrap()
                        - analytic_fundamental(&anchor, t - step).unwrap())
                        / (2.0 * step);
                    let jac = fields.unperturbed_jacobian_with_root(&anchor.reduced_state(t), mom);
                    let resid = dm - jac * analytic_fundamental(&anchor, t).unwrap();
                    assert!(max_abs(&resid) <= 1e-8, "{branch} alpha={alpha} t={t}");
                    checked += 1;
                }
                assert!(checked > 20);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn sign_of_averaged_function(a in -3.0f64..3.0, h in 0.05f64..3.0, u in -0.999f64..0.999) {
                prop_assume!(a != 0.0);
                let p = ModelParams::new(a, 1.0, 1.0, SQRT_2).unwrap();
                let lvl = level(h);
                let alpha = u * (2.0 * h).sqrt();
                let f = averaged_f_closed(Branch::X, alpha, lvl, &p).unwrap();
                prop_assert_eq!(f.signum(), (a * h).signum());
            }
        }
    }
}
