//! Adaptive Runge-Kutta integration with dense output, variational
//! equations, Floquet multipliers and Poincare return maps.

mod dopri;
mod section;

use nalgebra::{Complex, DMatrix, Matrix4};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{field_into, jacobian_into, ModelParams, PhaseState};

pub use dopri::{Segment, StepStats};
pub use section::{poincare_return, poincare_return_with, Crossing, Direction, Section};

use dopri::Dopri;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self { rtol: 1e-12, atol: 1e-12, max_step: f64::INFINITY, max_steps: 2_000_000 }
    }
}

impl IntegratorConfig {
    pub fn with_tolerance(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v <= 1e-2;
        if !(ok(self.rtol) && ok(self.atol)) {
            return Err(Error::Domain(format!(
                "integrator tolerances must lie in (0, 1e-2], got rtol={} atol={}",
                self.rtol, self.atol
            )));
        }
        if self.max_steps == 0 || !(self.max_step > 0.0) {
            return Err(Error::Domain("max steps and max step size must be positive".into()));
        }
        Ok(())
    }
}

/// Samples at every accepted step plus the continuous extension between
/// them. Times are ordered in the direction of integration.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dim: usize,
    pub times: Vec<f64>,
    states: Vec<f64>,
    segments: Vec<Segment>,
    pub stats: StepStats,
}

impl Trajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn final_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.times[0], self.times[self.len() - 1])
    }

    /// Dense evaluation anywhere on the covered span.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        let forward = self.segments.first().is_none_or(|s| s.h > 0.0);
        // segments ordered along the integration direction
        let idx = self.segments.partition_point(|s| if forward { s.t1() < t } else { s.t1() > t });
        let seg =
            self.segments.get(idx).filter(|s| s.contains(t)).or_else(|| self.segments.iter().find(|s| s.contains(t)));
        match seg {
            Some(s) => {
                let mut out = vec![0.0; self.dim];
                s.eval_into(t, &mut out);
                Ok(out)
            }
            None if self.segments.is_empty() && t == self.times[0] => Ok(self.state(0).to_vec()),
            None => Err(Error::Domain(format!("t = {t} outside the trajectory span {:?}", self.span()))),
        }
    }

    pub fn phase_at(&self, t: f64) -> Result<PhaseState> {
        self.require_phase()?;
        Ok(PhaseState::from_slice(&self.eval(t)?))
    }

    pub fn phase_states(&self) -> Result<Vec<PhaseState>> {
        self.require_phase()?;
        Ok(self.states.chunks(4).map(PhaseState::from_slice).collect())
    }

    fn require_phase(&self) -> Result<()> {
        if self.dim == 4 {
            Ok(())
        } else {
            Err(Error::Domain(format!("trajectory has dimension {}, not 4", self.dim)))
        }
    }
}

/// Integrates `y' = f(t, y)` over `t_span`, which may run backwards,
/// storing every step.
pub fn integrate<F>(f: &F, y0: &[f64], t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    let dim = y0.len();
    let mut traj =
        Trajectory { dim, times: vec![t0], states: y0.to_vec(), segments: Vec::new(), stats: StepStats::default() };
    if t0 == t1 {
        return Ok(traj);
    }
    let mut stepper = Dopri::new(f, t0, y0, t1, *cfg)?;
    while stepper.t != t1 {
        let seg = stepper.step(t1)?;
        traj.segments.push(seg);
        traj.times.push(stepper.t);
        traj.states.extend_from_slice(&stepper.y);
    }
    traj.stats = stepper.stats;
    Ok(traj)
}

/// Like [`integrate`] but keeps only the final state.
pub fn propagate<F>(f: &F, y0: &[f64], t_span: (f64, f64), cfg: &IntegratorConfig) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    let (t0, t1) = t_span;
    if t0 == t1 {
        return Ok(y0.to_vec());
    }
    let mut stepper = Dopri::new(f, t0, y0, t1, *cfg)?;
    while stepper.t != t1 {
        stepper.step(t1)?;
    }
    Ok(stepper.y)
}

/// Full-system field as an integrator right-hand side.
pub fn model_rhs(params: ModelParams, eps: f64) -> impl Fn(f64, &[f64], &mut [f64]) {
    move |_t, y, out| field_into(&params, eps, y, out)
}

pub fn integrate_model(
    params: &ModelParams,
    eps: f64,
    ic: &PhaseState,
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate(&model_rhs(*params, eps), &ic.to_array(), t_span, cfg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonodromyResult {
    pub final_state: Vec<f64>,
    /// `n x n` fundamental matrix at `t0 + period`.
    pub monodromy: DMatrix<f64>,
    pub period: f64,
}

/// Right-hand side of the state plus its `n x n` variational matrix, stored
/// column-major after the state.
fn variational_rhs<'a, F, J>(f: &'a F, jac: &'a J, n: usize) -> impl Fn(f64, &[f64], &mut [f64]) + 'a
where
    F: Fn(f64, &[f64], &mut [f64]),
    J: Fn(f64, &[f64], &mut [f64]),
{
    move |t, z, out| {
        let (y, phi) = z.split_at(n);
        let (dy, dphi) = out.split_at_mut(n);
        f(t, y, dy);
        let mut j = vec![0.0; n * n];
        jac(t, y, &mut j);
        // d(phi)/dt = J phi, all column-major
        for col in 0..n {
            for row in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += j[k * n + row] * phi[col * n + k];
                }
                dphi[col * n + row] = acc;
            }
        }
    }
}

/// Integrates state and fundamental matrix jointly from `M(t0) = I`. The
/// jacobian writes `df/dy` column-major into its third argument.
pub fn integrate_variational<F, J>(
    f: &F,
    jac: &J,
    y0: &[f64],
    t0: f64,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<MonodromyResult>
where
    F: Fn(f64, &[f64], &mut [f64]),
    J: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut z0 = y0.to_vec();
    z0.extend(DMatrix::<f64>::identity(n, n).iter());
    let rhs = variational_rhs(f, jac, n);
    let z = propagate(&rhs, &z0, (t0, t0 + period), cfg)?;
    Ok(MonodromyResult { final_state: z[..n].to_vec(), monodromy: DMatrix::from_column_slice(n, n, &z[n..]), period })
}

/// As [`integrate_variational`] but keeps the dense trajectory of the
/// joint system, so `M(t)` can be read at intermediate times.
pub fn integrate_variational_dense<F, J>(
    f: &F,
    jac: &J,
    y0: &[f64],
    t_span: (f64, f64),
    cfg: &IntegratorConfig,
) -> Result<Trajectory>
where
    F: Fn(f64, &[f64], &mut [f64]),
    J: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut z0 = y0.to_vec();
    z0.extend(DMatrix::<f64>::identity(n, n).iter());
    integrate(&variational_rhs(f, jac, n), &z0, t_span, cfg)
}

/// Monodromy of the full four-dimensional system over `period`.
pub fn model_monodromy(
    params: &ModelParams,
    eps: f64,
    ic: &PhaseState,
    period: f64,
    cfg: &IntegratorConfig,
) -> Result<MonodromyResult> {
    let p = *params;
    let jac = move |_t: f64, y: &[f64], out: &mut [f64]| jacobian_into(&p, eps, y, out);
    integrate_variational(&model_rhs(p, eps), &jac, &ic.to_array(), 0.0, period, cfg)
}

/// `J = [[0, I], [-I, 0]]` in `(x, y | p_x, p_y)` ordering.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j.fixed_view_mut::<2, 2>(0, 2).fill_with_identity();
    j.fixed_view_mut::<2, 2>(2, 0).copy_from(&-nalgebra::Matrix2::identity());
    j
}

/// `max |M^T J M - J|` for a 4x4 matrix.
pub fn symplectic_defect(m: &DMatrix<f64>) -> Result<f64> {
    if m.shape() != (4, 4) {
        return Err(Error::Domain(format!("symplectic defect needs a 4x4 matrix, got {:?}", m.shape())));
    }
    let m4 = Matrix4::from_iterator(m.iter().copied());
    let j = symplectic_form();
    Ok((m4.transpose() * j * m4 - j).amax())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FloquetSpectrum {
    /// Eigenvalues of the monodromy, ascending modulus.
    pub multipliers: Vec<Complex<f64>>,
    /// Indices of the two multipliers closest to 1.
    pub trivial_pair: Option<(usize, usize)>,
    /// `max |lambda - 1|` over the trivial pair.
    pub trivial_defect: f64,
    /// `max |lambda mu - 1|` over the remaining multipliers paired with their
    /// reciprocal partners.
    pub reciprocal_defect: f64,
    pub determinant: f64,
}

impl FloquetSpectrum {
    /// The two non-trivial multipliers of a 4x4 spectrum.
    pub fn nontrivial(&self) -> Vec<Complex<f64>> {
        match self.trivial_pair {
            Some((i, j)) => {
                self.multipliers.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, v)| *v).collect()
            }
            None => self.multipliers.clone(),
        }
    }
}

pub fn floquet(monodromy: &DMatrix<f64>) -> Result<FloquetSpectrum> {
    if !monodromy.is_square() {
        return Err(Error::Domain("Floquet multipliers need a square matrix".into()));
    }
    let n = monodromy.nrows();
    let mut multipliers: Vec<Complex<f64>> = monodromy.complex_eigenvalues().iter().copied().collect();
    multipliers.sort_by(|a, b| a.norm().total_cmp(&b.norm()).then(a.im.total_cmp(&b.im)));
    let one = Complex::new(1.0, 0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| (multipliers[i] - one).norm().total_cmp(&(multipliers[j] - one).norm()));
    let trivial_pair = (n >= 2).then(|| (order[0].min(order[1]), order[0].max(order[1])));
    let trivial_defect =
        trivial_pair.map_or(f64::NAN, |(i, j)| (multipliers[i] - one).norm().max((multipliers[j] - one).norm()));
    // pair each remaining multiplier with the one closest to its reciprocal
    let rest: Vec<Complex<f64>> =
        (0..n).filter(|k| trivial_pair.is_none_or(|(i, j)| *k != i && *k != j)).map(|k| multipliers[k]).collect();
    let reciprocal_defect = rest
        .iter()
        .enumerate()
        .map(|(a, la)| {
            rest.iter()
                .enumerate()
                .filter(|(b, _)| *b != a)
                .map(|(_, lb)| (la * lb - one).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let reciprocal_defect = if rest.len() < 2 { 0.0 } else { reciprocal_defect };
    Ok(FloquetSpectrum {
        multipliers,
        trivial_pair,
        trivial_defect,
        reciprocal_defect,
        determinant: monodromy.determinant(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closedform::{analytic_fundamental, FamilyAnchor};
    use crate::error::Branch;
    use crate::model::{energy, EnergyLevel};
    use crate::reduction::{BranchFields, ReducedState};
    use std::f64::consts::{PI, SQRT_2, TAU};

    fn params(a: f64, b: f64, c: f64, q: f64) -> ModelParams {
        ModelParams::new(a, b, c, q).unwrap()
    }

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn linear_oscillator_returns_after_one_period() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let t = integrate_model(&p, 0.0, &PhaseState::new(1.0, 0.0, 0.0, 0.0), (0.0, TAU), &cfg()).unwrap();
        let end = PhaseState::from_slice(t.final_state());
        assert!(end.distance(&PhaseState::new(1.0, 0.0, 0.0, 0.0)) < 1e-10);
        let ic = PhaseState::new(0.0, 1.0, 0.0, 0.0);
        let t = integrate_model(&p, 0.0, &ic, (0.0, TAU * SQRT_2), &cfg()).unwrap();
        assert!(PhaseState::from_slice(t.final_state()).distance(&ic) < 1e-10);
    }

    #[test]
    fn dense_output_matches_nodes_and_exact_solution() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let t = integrate_model(&p, 0.0, &PhaseState::new(1.0, 0.0, 0.0, 0.0), (0.0, 5.0), &cfg()).unwrap();
        for i in 0..t.len() {
            let d = t.eval(t.times[i]).unwrap();
            assert!(d.iter().zip(t.state(i)).all(|(a, b)| (a - b).abs() < 1e-14));
        }
        assert!(t.times.windows(2).all(|w| w[1] > w[0]));
        for s in [0.1, 1.234, 2.5, 4.99] {
            let v = t.phase_at(s).unwrap();
            assert!((v.x - s.cos()).abs() < 1e-9 && (v.px + s.sin()).abs() < 1e-9, "t={s}");
        }
        assert!(t.eval(6.0).is_err());
    }

    #[test]
    fn energy_drift_over_hundred_periods() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let ic = PhaseState::new(0.8, 0.3, 0.1, -0.2);
        let h0 = energy(&p, 0.01, &ic);
        let traj = integrate_model(&p, 0.01, &ic, (0.0, 200.0 * PI), &cfg()).unwrap();
        let drift = traj.phase_states().unwrap().iter().map(|s| (energy(&p, 0.01, s) - h0).abs()).fold(0.0, f64::max);
        assert!(drift <= 1e-9 * (1.0 + h0.abs()), "drift {drift:e}");
    }

    #[test]
    fn forward_backward_reversibility() {
        let p = params(1.0, 0.5, 2.0, SQRT_2);
        let ic = [0.7, -0.4, 0.2, 0.5];
        let tol = 1e-10;
        let c = IntegratorConfig::with_tolerance(tol);
        let rhs = model_rhs(p, 0.05);
        let fwd = propagate(&rhs, &ic, (0.0, 10.0), &c).unwrap();
        let back = propagate(&rhs, &fwd, (10.0, 0.0), &c).unwrap();
        let err = ic.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err <= 10.0 * tol * 100.0, "{err:e}");
        let traj = integrate(&rhs, &fwd, (10.0, 0.0), &c).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] < w[0]));
        assert!(traj.eval(5.0).is_ok());
    }

    #[test]
    fn error_does_not_grow_when_tolerance_shrinks() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let rhs = model_rhs(p, 0.0);
        let ic = [1.0, 0.5, 0.0, 0.3];
        let exact = |t: f64| {
            let w = 1.0 / SQRT_2;
            [t.cos(), 0.5 * (w * t).cos() + 0.3 * (w * t).sin()]
        };
        let mut last = f64::INFINITY;
        for tol in [1e-6, 5e-7, 2.5e-7, 1e-8, 1e-10, 1e-12] {
            let y = propagate(&rhs, &ic, (0.0, 20.0), &IntegratorConfig::with_tolerance(tol)).unwrap();
            let e = exact(20.0);
            let err = (y[0] - e[0]).abs().max((y[1] - e[1]).abs());
            assert!(err <= last * 1.5, "tol {tol}: {err:e} after {last:e}");
            last = err;
        }
        assert!(last < 1e-10);
    }

    #[test]
    fn unperturbed_monodromy_and_spectrum() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let m = model_monodromy(&p, 0.0, &PhaseState::new(1.0, 0.0, 0.0, 0.0), TAU, &cfg()).unwrap();
        let mm = &m.monodromy;
        // identity on (x, p_x), rotation by 2 pi / q on (y, p_y)
        let th = TAU / SQRT_2;
        let expect = [
            (0, 0, 1.0),
            (2, 2, 1.0),
            (0, 2, 0.0),
            (1, 1, th.cos()),
            (1, 3, th.sin()),
            (3, 1, -th.sin()),
            (3, 3, th.cos()),
        ];
        for (r, c, v) in expect {
            assert!((mm[(r, c)] - v).abs() < 1e-9, "({r},{c}) {} vs {v}", mm[(r, c)]);
        }
        let fl = floquet(mm).unwrap();
        assert!(fl.trivial_defect < 1e-8);
        assert!(fl.nontrivial().iter().all(|l| (l.norm() - 1.0).abs() < 1e-9));
        let arg = fl.nontrivial()[0].arg().abs();
        assert!((arg - (TAU - th).abs()).abs() < 1e-8 || (arg - th.rem_euclid(TAU)).abs() < 1e-8);
        assert!((fl.determinant - 1.0).abs() < 1e-9);
        assert!(symplectic_defect(mm).unwrap() < 1e-9);
    }

    #[test]
    fn floquet_of_identity() {
        let fl = floquet(&DMatrix::identity(4, 4)).unwrap();
        assert!(fl.multipliers.iter().all(|l| (l - Complex::new(1.0, 0.0)).norm() < 1e-15));
        assert_eq!(fl.trivial_defect, 0.0);
        assert_eq!(fl.reciprocal_defect, 0.0);
    }

    #[test]
    fn perturbed_monodromy_is_symplectic() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let m = model_monodromy(&p, 0.01, &PhaseState::new(0.9, 0.2, 0.1, 0.3), 7.0, &cfg()).unwrap();
        assert!(symplectic_defect(&m.monodromy).unwrap() < 1e-9);
        let fl = floquet(&m.monodromy).unwrap();
        let prod = fl.multipliers.iter().fold(Complex::new(1.0, 0.0), |acc, l| acc * l);
        assert!((prod - Complex::new(1.0, 0.0)).norm() < 1e-9);
    }

    #[test]
    fn reduced_fundamental_matches_closed_form() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let h = EnergyLevel::new(0.5).unwrap();
        let fields = BranchFields::new(Branch::X, h, &p, (0.0, 1.0)).unwrap();
        let f = |_t: f64, y: &[f64], out: &mut [f64]| match fields.unperturbed(&ReducedState::new(y[0], y[1], y[2])) {
            Ok(v) => out.copy_from_slice(v.as_slice()),
            Err(_) => out.fill(f64::NAN),
        };
        let jac = |_t: f64, y: &[f64], out: &mut [f64]| match fields
            .unperturbed_jacobian(&ReducedState::new(y[0], y[1], y[2]))
        {
            Ok(m) => out.copy_from_slice(m.as_slice()),
            Err(_) => out.fill(f64::NAN),
        };
        let traj = integrate_variational_dense(&f, &jac, &[0.0, 0.0, 0.0], (0.0, 1.5), &cfg()).unwrap();
        let anchor = FamilyAnchor::new(Branch::X, 0.0, 1.0, h, SQRT_2).unwrap();
        for t in [0.5, 1.0, 1.5] {
            let z = traj.eval(t).unwrap();
            let m = DMatrix::from_column_slice(3, 3, &z[3..]);
            let exact = analytic_fundamental(&anchor, t).unwrap();
            let err = m.iter().zip(exact.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8, "t={t}: {err:e}");
        }
    }

    #[test]
    fn reduced_chart_boundary_reports_location() {
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let h = EnergyLevel::new(0.5).unwrap();
        let fields = BranchFields::new(Branch::X, h, &p, (0.0, 1.0)).unwrap();
        let f = |_t: f64, y: &[f64], out: &mut [f64]| match fields.unperturbed(&ReducedState::new(y[0], y[1], y[2])) {
            Ok(v) => out.copy_from_slice(v.as_slice()),
            Err(_) => out.fill(f64::NAN),
        };
        match integrate(&f, &[0.0, 0.0, 0.0], (0.0, 3.0), &cfg()) {
            Err(Error::Integration { t, .. }) => assert!((t - PI / 2.0).abs() < 1e-3, "t={t}"),
            other => panic!("expected failure near pi/2, got {:?}", other.map(|t| t.len())),
        }
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::with_tolerance(0.1).validate().is_err());
        assert!(IntegratorConfig { max_steps: 0, ..cfg() }.validate().is_err());
        let p = params(1.0, 1.0, 1.0, SQRT_2);
        let tight = IntegratorConfig { max_steps: 5, ..cfg() };
        assert!(matches!(
            integrate_model(&p, 0.0, &PhaseState::new(1.0, 0.0, 0.0, 0.0), (0.0, 100.0), &tight),
            Err(Error::Integration { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(12))]

            #[test]
            fn energy_is_conserved(a in 0.0f64..2.0, b in -1.0f64..1.0, c in 0.0f64..2.0, q in 0.5f64..2.5,
                                   s in prop::array::uniform4(-0.7f64..0.7)) {
                let p = ModelParams::new(a, b, c, q).unwrap();
                let eps = 0.05;
                let s0 = PhaseState::from_slice(&s);
                let h = energy(&p, eps, &s0);
                let traj = integrate_model(&p, eps, &s0, (0.0, 200.0 * std::f64::consts::PI),
                                           &IntegratorConfig::with_tolerance(1e-12)).unwrap();
                for st in traj.phase_states().unwrap() {
                    prop_assert!((energy(&p, eps, &st) - h).abs() <= 1e-9 * (1.0 + h.abs()));
                }
            }

            #[test]
            fn forward_then_backward_returns(s in prop::array::uniform4(-1.0f64..1.0), t in 0.5f64..8.0) {
                let p = ModelParams::new(1.0, 0.5, 0.7, 1.3).unwrap();
                let c = IntegratorConfig::with_tolerance(1e-12);
                let f = model_rhs(p, 0.1);
                let there = propagate(&f, &s, (0.0, t), &c).unwrap();
                let back = propagate(&f, &there, (t, 0.0), &c).unwrap();
                for (x, y) in back.iter().zip(&s) {
                    prop_assert!((x - y).abs() <= 1e-10, "{x} vs {y}");
                }
            }
        }
    }
}
