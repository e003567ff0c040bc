//! First returns to a coordinate hyperplane.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ModelParams, PhaseState};

use super::dopri::Dopri;
use super::{model_rhs, IntegratorConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increasing,
    Decreasing,
    Either,
}

/// `{ y[index] = level }`, crossed in `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Section {
    pub index: usize,
    pub level: f64,
    pub direction: Direction,
}

impl Section {
    pub fn new(index: usize, level: f64, direction: Direction) -> Self {
        Self { index, level, direction }
    }

    fn value(&self, y: &[f64]) -> f64 {
        y[self.index] - self.level
    }

    /// Whether going from `before` to `after` crosses in the right sense. A
    /// start exactly on the section does not count.
    fn crossed(&self, before: f64, after: f64) -> bool {
        let up = before < 0.0 && after >= 0.0;
        let down = before > 0.0 && after <= 0.0;
        match self.direction {
            Direction::Increasing => up,
            Direction::Decreasing => down,
            Direction::Either => up || down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Crossing {
    /// Time elapsed since the start.
    pub time: f64,
    pub state: Vec<f64>,
}

const TIME_TOL: f64 = 1e-12;

/// Integrates from `y0` until the next crossing of `section`, at most
/// `t_max` time units. The crossing is bracketed on the dense output and
/// then polished by Newton steps in which each trial state comes from one
/// exact Runge-Kutta step taken from the start of the bracketing step.
pub fn poincare_return_with<F>(
    f: &F,
    section: &Section,
    y0: &[f64],
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<Crossing>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    cfg.validate()?;
    if section.index >= y0.len() {
        return Err(Error::Domain(format!("section index {} out of range", section.index)));
    }
    if !(t_max > 0.0) {
        return Err(Error::Domain("return search span must be positive".into()));
    }
    let mut stepper = Dopri::new(f, 0.0, y0, t_max, *cfg)?;
    let n = y0.len();
    let mut buf = vec![0.0; n];
    while stepper.t < t_max {
        let (y_start, g_start) = (stepper.y.clone(), section.value(&stepper.y));
        let seg = stepper.step(t_max)?;
        let g_end = section.value(&stepper.y);
        if !section.crossed(g_start, g_end) {
            continue;
        }
        // bisection on the interpolant
        let (mut lo, mut hi) = (seg.t0, seg.t1());
        let mut g_lo = g_start;
        for _ in 0..200 {
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            seg.eval_into(mid, &mut buf);
            let g = section.value(&buf);
            if section.crossed(g_lo, g) {
                hi = mid;
            } else {
                lo = mid;
                g_lo = g;
            }
        }
        let mut tau = 0.5 * (lo + hi);
        seg.eval_into(tau, &mut buf);

        // Newton polish with exact steps from the bracketing step's start
        let mut polisher = Dopri::new(f, seg.t0, &y_start, seg.t1(), *cfg)?;
        let mut deriv = vec![0.0; n];
        let mut state = buf.clone();
        let mut trial = vec![0.0; n];
        for _ in 0..8 {
            polisher.exact_step(tau - seg.t0, &mut trial);
            f(tau, &trial, &mut deriv);
            let slope = deriv[section.index];
            if slope == 0.0 || !slope.is_finite() {
                break;
            }
            let dt = -section.value(&trial) / slope;
            state.copy_from_slice(&trial);
            if !(dt.abs() <= (seg.h.abs()).max(TIME_TOL)) {
                break;
            }
            tau += dt;
            if dt.abs() <= 1e-3 * TIME_TOL * tau.abs().max(1.0) {
                polisher.exact_step(tau - seg.t0, &mut state);
                break;
            }
        }
        return Ok(Crossing { time: tau, state });
    }
    Err(Error::NoReturn { t_max })
}

/// [`poincare_return_with`] for the full model.
pub fn poincare_return(
    params: &ModelParams,
    eps: f64,
    section: &Section,
    ic: &PhaseState,
    t_max: f64,
    cfg: &IntegratorConfig,
) -> Result<(PhaseState, f64)> {
    let c = poincare_return_with(&model_rhs(*params, eps), section, &ic.to_array(), t_max, cfg)?;
    Ok((PhaseState::from_slice(&c.state), c.time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, SQRT_2, TAU};

    fn p() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0, SQRT_2).unwrap()
    }

    #[test]
    fn first_zero_of_cosine() {
        let sec = Section::new(0, 0.0, Direction::Decreasing);
        let (s, t) =
            poincare_return(&p(), 0.0, &sec, &PhaseState::new(1.0, 0.0, 0.0, 0.0), 10.0, &IntegratorConfig::default())
                .unwrap();
        assert!((t - FRAC_PI_2).abs() < 1e-12, "{t}");
        assert!(s.distance(&PhaseState::new(0.0, 0.0, -1.0, 0.0)) < 1e-11);
    }

    #[test]
    fn two_same_direction_crossings_span_a_period() {
        let sec = Section::new(0, 0.0, Direction::Decreasing);
        let cfg = IntegratorConfig::default();
        let (s1, t1) = poincare_return(&p(), 0.0, &sec, &PhaseState::new(1.0, 0.0, 0.0, 0.0), 10.0, &cfg).unwrap();
        let (_, t2) = poincare_return(&p(), 0.0, &sec, &s1, 10.0, &cfg).unwrap();
        assert!((t2 - TAU).abs() < 1e-10, "{}", t2 - TAU);
        assert!(t1 > 0.0);
    }

    #[test]
    fn starting_on_the_section_is_not_a_return() {
        // p_x = -sin t leaves zero downwards; the next downward crossing is a period later
        let sec = Section::new(2, 0.0, Direction::Decreasing);
        let (_, t) =
            poincare_return(&p(), 0.0, &sec, &PhaseState::new(1.0, 0.0, 0.0, 0.0), 10.0, &IntegratorConfig::default())
                .unwrap();
        assert!((t - TAU).abs() < 1e-10);
    }

    #[test]
    fn missing_crossing_is_reported() {
        let sec = Section::new(0, 5.0, Direction::Either);
        assert!(matches!(
            poincare_return(&p(), 0.0, &sec, &PhaseState::new(1.0, 0.0, 0.0, 0.0), 20.0, &IntegratorConfig::default()),
            Err(Error::NoReturn { .. })
        ));
    }
}
