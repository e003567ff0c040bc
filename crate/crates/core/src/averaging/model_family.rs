//! The axial orbit families of the galactic Hamiltonian as a
//! [`PeriodicFamily`], and the end-to-end prediction pipeline.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::Serialize;

use super::quadrature::{QuadratureSpec, Sinusoid};
use super::zeros::{find_zeros, LocatedZero, ZeroSearchConfig};
use super::{averaged_function, hypothesis_diagnostics, label_orbits, HypothesisReport, PeriodicFamily, Perturbation};
use crate::closedform::{
    analytic_fundamental, analytic_fundamental_inverse, averaged_f_closed, circle_radius, family_period, FamilyAnchor,
};
use crate::error::{Branch, Result};
use crate::model::{EnergyLevel, ModelParams};
use crate::reduction::{BranchFields, ReducedState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Chart {
    /// `alpha` is the family coordinate `x0` (or `y0`), momentum `>= 0`.
    Amplitude,
    /// `(amplitude, momentum) = r (sin theta, cos theta)`, covering the
    /// whole energy circle including the turning points.
    Angle,
}

#[derive(Debug, Clone, Copy)]
pub struct ModelFamily {
    pub branch: Branch,
    pub h: EnergyLevel,
    pub params: ModelParams,
    pub chart: Chart,
    fields: BranchFields,
}

fn to_dmatrix(m: Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_iterator(3, 3, m.iter().copied())
}

impl ModelFamily {
    pub fn new(branch: Branch, h: EnergyLevel, params: &ModelParams, chart: Chart) -> Result<Self> {
        let fields = BranchFields::at_level(branch, h, params)?;
        Ok(Self { branch, h, params: *params, chart, fields })
    }

    pub fn radius(&self) -> f64 {
        circle_radius(self.branch, self.h, self.params.q)
    }

    pub fn anchor(&self, param: f64) -> Result<FamilyAnchor> {
        match self.chart {
            Chart::Amplitude => FamilyAnchor::from_amplitude(self.branch, param, self.h, self.params.q),
            Chart::Angle => Ok(FamilyAnchor::from_angle(self.branch, param, self.h, self.params.q)),
        }
    }

    /// Amplitude coordinate of a chart point.
    pub fn to_amplitude(&self, param: f64) -> f64 {
        match self.chart {
            Chart::Amplitude => param,
            Chart::Angle => self.radius() * param.sin(),
        }
    }

    /// Reduced `F1` along the family, evaluated with the continued signed
    /// momentum of the orbit.
    pub fn perturbation(&self) -> ModelPerturbation<'_> {
        ModelPerturbation(self)
    }

    pub fn averaged(&self, param: f64, quad: &QuadratureSpec) -> Result<f64> {
        averaged_function(self, &self.perturbation(), param, quad)
    }
}

pub struct ModelPerturbation<'a>(&'a ModelFamily);

impl Perturbation for ModelPerturbation<'_> {
    fn eval(&self, alpha: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        let root = self.0.anchor(alpha)?.momentum_sinusoid().eval(t);
        let r = ReducedState::new(x[0], x[1], x[2]);
        let f = self.0.fields.perturbation_with_root(&r, root);
        Ok(DVector::from_column_slice(f.as_slice()))
    }
}

impl PeriodicFamily for ModelFamily {
    fn dim(&self) -> usize {
        3
    }

    fn period(&self) -> f64 {
        family_period(self.branch, self.params.q)
    }

    fn chart_domain(&self) -> (f64, f64) {
        match self.chart {
            Chart::Amplitude => (-self.radius(), self.radius()),
            Chart::Angle => (-PI, PI),
        }
    }

    fn solution(&self, alpha: f64, t: f64) -> Result<DVector<f64>> {
        let r = self.anchor(alpha)?.reduced_state(t);
        Ok(DVector::from_column_slice(&r.0))
    }

    fn fundamental(&self, alpha: f64, t: f64) -> Result<DMatrix<f64>> {
        Ok(to_dmatrix(analytic_fundamental(&self.anchor(alpha)?, t)?))
    }

    fn fundamental_inverse(&self, alpha: f64, t: f64) -> Result<DMatrix<f64>> {
        Ok(to_dmatrix(analytic_fundamental_inverse(&self.anchor(alpha)?, t)))
    }

    fn singular_denominator(&self, alpha: f64) -> Result<Option<Sinusoid>> {
        Ok(Some(self.anchor(alpha)?.momentum_sinusoid()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AveragingConfig {
    /// Amplitude grid size over `[-0.99 r, 0.99 r]`.
    pub grid_points: usize,
    pub quad: QuadratureSpec,
    pub zeros: ZeroSearchConfig,
    pub hypothesis_tol: f64,
}

impl Default for AveragingConfig {
    fn default() -> Self {
        Self {
            grid_points: 101,
            quad: QuadratureSpec::default(),
            zeros: ZeroSearchConfig::default(),
            hypothesis_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageRow {
    pub alpha: f64,
    pub f_quad: f64,
    pub f_closed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisSummary {
    pub det_delta: f64,
    pub upper_right_max: f64,
    pub passed: bool,
}

impl From<&HypothesisReport> for HypothesisSummary {
    fn from(r: &HypothesisReport) -> Self {
        Self { det_delta: r.det_delta, upper_right_max: r.upper_right_max, passed: r.passed() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragingReport {
    pub branch: Branch,
    pub h: f64,
    pub rows: Vec<AverageRow>,
    pub max_deviation: f64,
    pub hypotheses: HypothesisSummary,
    /// Zeros located in the angle chart, with amplitudes attached.
    pub zeros: Vec<LocatedZero>,
    /// `F` vanishes identically on the level; first-order averaging says
    /// nothing about this branch.
    pub degenerate: bool,
}

impl AveragingReport {
    pub fn simple_zeros(&self) -> impl Iterator<Item = &LocatedZero> {
        self.zeros.iter().filter(|z| z.simple)
    }

    /// Number of distinct unperturbed orbits carrying a simple zero.
    pub fn predicted_orbits(&self) -> usize {
        let mut ids: Vec<usize> = self.simple_zeros().map(|z| z.orbit_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// `F` by quadrature and in closed form on `n` amplitudes spanning
/// `[-0.99 r, 0.99 r]`.
pub fn tabulate(family: &ModelFamily, n: usize, quad: &QuadratureSpec) -> Result<Vec<AverageRow>> {
    let amp = ModelFamily { chart: Chart::Amplitude, ..*family };
    let r = amp.radius();
    let n = n.max(2);
    (0..n)
        .map(|i| {
            let alpha = -0.99 * r + 1.98 * r * i as f64 / (n - 1) as f64;
            Ok(AverageRow {
                alpha,
                f_quad: amp.averaged(alpha, quad)?,
                f_closed: averaged_f_closed(amp.branch, alpha, amp.h, &amp.params)?,
            })
        })
        .collect()
}

/// Tabulates `F` on an amplitude grid against its closed form, checks the
/// gap hypotheses, and locates the zeros of `F` in the angle chart.
pub fn analyze_branch(
    params: &ModelParams,
    branch: Branch,
    h: EnergyLevel,
    cfg: &AveragingConfig,
) -> Result<AveragingReport> {
    params.validate()?;
    let amp = ModelFamily::new(branch, h, params, Chart::Amplitude)?;
    let rows = tabulate(&amp, cfg.grid_points, &cfg.quad)?;
    let max_deviation = rows.iter().map(|row| (row.f_quad - row.f_closed).abs()).fold(0.0, f64::max);
    let hypotheses = hypothesis_diagnostics(&amp, cfg.hypothesis_tol)?;

    let angle = ModelFamily::new(branch, h, params, Chart::Angle)?;
    let to_alpha = |theta: f64| angle.to_amplitude(theta);
    let degenerate = rows.iter().all(|row| row.f_quad.abs() <= cfg.zeros.zero_tol);
    let mut zeros = find_zeros(|t| angle.averaged(t, &cfg.quad), angle.chart_domain(), Some(&to_alpha), &cfg.zeros)?;
    label_orbits(&angle, &mut zeros)?;

    Ok(AveragingReport {
        branch,
        h: h.value(),
        rows,
        max_deviation,
        hypotheses: (&hypotheses).into(),
        zeros,
        degenerate,
    })
}
