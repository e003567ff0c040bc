//! Numerical confirmation of the predicted orbits: shooting in the full
//! system, a one-degree-of-freedom period oracle for axial orbits,
//! continuation in `eps`, and orbit counting per energy level.

use log::debug;
use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::averaging::quadrature::gauss_legendre;
use crate::averaging::{analyze_branch, AveragingConfig};
use crate::closedform::{circle_radius, family_period, gap_matrix, FamilyAnchor};
use crate::error::{Branch, Error, HypothesisFlag, Result};
use crate::integrator::{
    floquet, integrate_model, model_monodromy, poincare_return, symplectic_defect, Direction, FloquetSpectrum,
    IntegratorConfig, Section,
};
use crate::model::{energy, rescale, vector_field, EnergyLevel, ModelParams, PhaseState, RescaleDirection};
use crate::resonance::detect_rational;

/// Coordinates used by the shooting problem of one branch. The section is
/// `{ p = 0, q > 0 }` for the family's own pair `(q, p)`; the transverse
/// pair is free and the family coordinate is solved from the energy.
#[derive(Debug, Clone, Copy)]
struct Layout {
    solved: usize,
    section: usize,
    free: [usize; 2],
}

fn layout(branch: Branch) -> Layout {
    match branch {
        Branch::X => Layout { solved: 0, section: 2, free: [1, 3] },
        Branch::Y => Layout { solved: 1, section: 3, free: [0, 2] },
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    pub max_iterations: usize,
    /// Required `|flow(T, ic) - ic|`.
    pub tolerance: f64,
    pub integrator: IntegratorConfig,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self { max_iterations: 25, tolerance: 1e-10, integrator: IntegratorConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbitResult {
    pub branch: Branch,
    pub ic: PhaseState,
    pub period: f64,
    pub energy: f64,
    /// `|H(ic) - h|`.
    pub energy_error: f64,
    pub eps: f64,
    pub floquet: FloquetSpectrum,
    pub symplectic_defect: f64,
    pub iterations: usize,
    pub residual: f64,
    pub history: Vec<f64>,
    /// Largest transverse coordinate along the orbit: `max(|y|, |p_y|)` on
    /// the x-branch, `max(|x|, |p_x|)` on the y-branch.
    pub plane_deviation: f64,
}

impl PeriodicOrbitResult {
    pub fn multipliers(&self) -> &[Complex<f64>] {
        &self.floquet.multipliers
    }
}

/// Family coordinate from the energy, given the transverse pair. Solves the
/// quadratic in the square of the family coordinate for its smallest
/// positive root.
fn solve_on_shell(params: &ModelParams, eps: f64, h: f64, branch: Branch, s: &PhaseState) -> Result<f64> {
    let ModelParams { a, b, c, q } = *params;
    // A X^2 + B X + C = 0 with X the squared family coordinate
    let (qa, qb, qc) = match branch {
        Branch::X => {
            (eps * a, 0.5 + eps * b * s.y * s.y, (s.py * s.py + s.y * s.y) / (2.0 * q) + eps * c * s.y.powi(4) - h)
        }
        Branch::Y => (
            eps * c,
            1.0 / (2.0 * q) + eps * b * s.x * s.x,
            0.5 * (s.px * s.px + s.x * s.x) + eps * a * s.x.powi(4) - h,
        ),
    };
    let disc = qb * qb - 4.0 * qa * qc;
    if !(disc >= 0.0) || !(qb > 0.0) {
        return Err(Error::Domain(format!("no point on the energy level h={h} over the given transverse state")));
    }
    let big = -qc * 2.0 / (qb + disc.sqrt());
    if !(big > 0.0) {
        return Err(Error::Domain(format!("transverse state already exceeds the energy level h={h}")));
    }
    Ok(big.sqrt())
}

fn assemble_ic(params: &ModelParams, eps: f64, h: f64, branch: Branch, u: &[f64; 2]) -> Result<PhaseState> {
    let lay = layout(branch);
    let mut v = [0.0; 4];
    v[lay.free[0]] = u[0];
    v[lay.free[1]] = u[1];
    let mut s = PhaseState::from_slice(&v);
    let amp = solve_on_shell(params, eps, h, branch, &s)?;
    v[lay.solved] = amp;
    s = PhaseState::from_slice(&v);
    Ok(s)
}

/// `d(ic)/d(u)` through the energy constraint.
fn ic_sensitivity(params: &ModelParams, eps: f64, branch: Branch, s: &PhaseState) -> DMatrix<f64> {
    let lay = layout(branch);
    // gradient of H in (x, y, p_x, p_y): (-F[2], -F[3], F[0], F[1])
    let f = vector_field(params, eps, s);
    let grad = [-f[2], -f[3], f[0], f[1]];
    let mut d = DMatrix::zeros(4, 2);
    for (col, &k) in lay.free.iter().enumerate() {
        d[(k, col)] = 1.0;
        d[(lay.solved, col)] = -grad[k] / grad[lay.solved];
    }
    d
}

fn branch_section(branch: Branch) -> Section {
    Section::new(layout(branch).section, 0.0, Direction::Decreasing)
}

/// Refines a guess into a periodic orbit of the full system on the level
/// `h`. Unknowns are the transverse pair on the section and the period;
/// the family coordinate is always recomputed from the energy.
pub fn shoot_periodic(
    params: &ModelParams,
    eps: f64,
    branch: Branch,
    guess: &PhaseState,
    guess_period: f64,
    h: EnergyLevel,
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbitResult> {
    params.validate()?;
    if !(guess_period > 0.0) {
        return Err(Error::Domain(format!("period guess must be positive, got {guess_period}")));
    }
    let lay = layout(branch);
    let hv = h.value();
    let icfg = &cfg.integrator;

    let mut start = *guess;
    let g = start.to_array();
    if !(g[lay.section].abs() <= 1e-14 && g[lay.solved] > 0.0) {
        let (s, _) = poincare_return(params, eps, &branch_section(branch), &start, 2.0 * guess_period, icfg)?;
        start = s;
    }
    let shell = (energy(params, eps, &start) - hv).abs();
    if shell > 1e-12 * (1.0 + hv) {
        debug!("guess off the energy level by {shell:e}; projecting");
    }
    let a0 = start.to_array();
    let mut u = [a0[lay.free[0]], a0[lay.free[1]]];
    let mut period = guess_period;

    let residual_at = |u: &[f64; 2], period: f64| -> Result<(PhaseState, DVector<f64>, DMatrix<f64>, PhaseState)> {
        let ic = assemble_ic(params, eps, hv, branch, u)?;
        let mono = model_monodromy(params, eps, &ic, period, icfg)?;
        let end = PhaseState::from_slice(&mono.final_state);
        let r = end.to_vector() - ic.to_vector();
        Ok((ic, DVector::from_column_slice(r.as_slice()), mono.monodromy, end))
    };

    let mut history = Vec::new();
    let (mut ic, mut r, mut m, mut end) = residual_at(&u, period)?;
    let mut res = r.norm();
    history.push(res);
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        if res <= 1e-3 * cfg.tolerance {
            break;
        }
        iterations += 1;
        // [(M - I) d(ic)/du, f(end)]
        let sens = (&m - DMatrix::identity(4, 4)) * ic_sensitivity(params, eps, branch, &ic);
        let mut jac = DMatrix::zeros(4, 3);
        jac.view_mut((0, 0), (4, 2)).copy_from(&sens);
        jac.set_column(2, &DVector::from_column_slice(vector_field(params, eps, &end).as_slice()));
        let step = jac
            .svd(true, true)
            .solve(&(-&r), 1e-14)
            .map_err(|e| Error::Domain(format!("shooting least-squares solve failed: {e}")))?;

        // damped update: halve until the residual decreases
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..8 {
            let trial_u = [u[0] + lambda * step[0], u[1] + lambda * step[1]];
            let trial_t = period + lambda * step[2];
            if trial_t > 0.0 {
                if let Ok(eval) = residual_at(&trial_u, trial_t) {
                    let trial_res = eval.1.norm();
                    if trial_res < res {
                        accepted = Some((trial_u, trial_t, eval, trial_res));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((nu, nt, eval, nres)) => {
                let stalled = nres > 0.5 * res;
                u = nu;
                period = nt;
                (ic, r, m, end) = eval;
                res = nres;
                history.push(res);
                if stalled && res <= cfg.tolerance {
                    break;
                }
            }
            // no decrease possible: the residual sits at the integration floor
            None => break,
        }
    }
    if !(res <= cfg.tolerance) {
        return Err(Error::NonConvergence { iterations, history });
    }

    let traj = integrate_model(params, eps, &ic, (0.0, period), icfg)?;
    let plane_deviation = traj
        .phase_states()?
        .iter()
        .map(|s| {
            let v = s.to_array();
            v[lay.free[0]].abs().max(v[lay.free[1]].abs())
        })
        .fold(0.0, f64::max);
    let e = energy(params, eps, &ic);
    Ok(PeriodicOrbitResult {
        branch,
        ic,
        period,
        energy: e,
        energy_error: (e - hv).abs(),
        eps,
        floquet: floquet(&m)?,
        symplectic_defect: symplectic_defect(&m)?,
        iterations,
        residual: res,
        history,
        plane_deviation,
    })
}

/// Period of the axial orbit on the level `h` from the one-degree-of-freedom
/// quadrature. With `u = x_max sin(phi)` the quarter-period integral has a
/// smooth integrand on `[0, pi/2]`.
pub fn axial_period(branch: Branch, h: EnergyLevel, params: &ModelParams, eps: f64) -> Result<f64> {
    params.validate()?;
    let hv = h.value();
    let q = params.q;
    // turning point: s = 2 k X^2 + X - level = 0 with k and level per branch
    let (k, level, scale) = match branch {
        Branch::X => (eps * params.a, 2.0 * hv, 4.0),
        Branch::Y => (q * eps * params.c, 2.0 * q * hv, 4.0 * q),
    };
    let disc = 1.0 + 8.0 * k * level;
    if !(disc > 0.0) {
        return Err(Error::OracleDomain(format!(
            "no positive turning point on the {branch}-axis (discriminant {disc:e})"
        )));
    }
    let x2 = 2.0 * level / (1.0 + disc.sqrt());
    let (nodes, weights) = gauss_legendre(64);
    let half = std::f64::consts::FRAC_PI_4;
    let sum: f64 = nodes
        .iter()
        .zip(&weights)
        .map(|(t, w)| {
            let phi = half * (t + 1.0);
            let s = phi.sin();
            w / (1.0 + 2.0 * k * x2 * (1.0 + s * s)).sqrt()
        })
        .sum();
    Ok(scale * half * sum)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationRow {
    pub eps: f64,
    pub ic: PhaseState,
    /// `|ic(eps) - ic(0)|`.
    pub displacement: f64,
    /// `|sqrt(eps) ic(eps)|`, the norm in original coordinates.
    pub unscaled_norm: f64,
    pub period: f64,
    pub residual: f64,
    pub iterations: usize,
    pub nontrivial_multipliers: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuationStudy {
    pub branch: Branch,
    pub h: f64,
    pub rows: Vec<ContinuationRow>,
    pub displacement_slope: f64,
    pub unscaled_slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Unperturbed axial orbit point on the section.
pub fn unperturbed_seed(branch: Branch, h: EnergyLevel, q: f64) -> PhaseState {
    let r = circle_radius(branch, h, q);
    match branch {
        Branch::X => PhaseState::new(r, 0.0, 0.0, 0.0),
        Branch::Y => PhaseState::new(0.0, r, 0.0, 0.0),
    }
}

/// Follows the axial orbit along `eps_list`, each run seeded by the
/// previous one, and fits the approach to the unperturbed orbit.
pub fn continuation_study(
    params: &ModelParams,
    branch: Branch,
    h: EnergyLevel,
    eps_list: &[f64],
    cfg: &ShootingConfig,
) -> Result<ContinuationStudy> {
    if eps_list.len() < 2 || eps_list.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::Domain("continuation needs at least two positive eps values".into()));
    }
    let base = unperturbed_seed(branch, h, params.q);
    let mut seed = base;
    let mut period = family_period(branch, params.q);
    let mut rows = Vec::new();
    for &eps in eps_list {
        let orbit = shoot_periodic(params, eps, branch, &seed, period, h, cfg).map_err(|e| match e {
            Error::NonConvergence { iterations, history } => Error::NonConvergence { iterations, history },
            other => Error::Domain(format!("continuation at eps={eps}: {other}")),
        })?;
        seed = orbit.ic;
        period = orbit.period;
        rows.push(ContinuationRow {
            eps,
            ic: orbit.ic,
            displacement: orbit.ic.distance(&base),
            unscaled_norm: rescale(&orbit.ic, eps, RescaleDirection::ToOriginal)?.norm(),
            period: orbit.period,
            residual: orbit.residual,
            iterations: orbit.iterations,
            nontrivial_multipliers: orbit.floquet.nontrivial().iter().map(|c| (c.re, c.im)).collect(),
        });
    }
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let disp: Vec<f64> = rows.iter().map(|r| r.displacement).collect();
    let unscaled: Vec<f64> = rows.iter().map(|r| r.unscaled_norm).collect();
    Ok(ContinuationStudy {
        branch,
        h: h.value(),
        displacement_slope: loglog_slope(&eps, &disp),
        unscaled_slope: loglog_slope(&eps, &unscaled),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitCount {
    pub orbits: Vec<PeriodicOrbitResult>,
    /// Branches whose averaged function vanishes identically.
    pub inconclusive: Vec<Branch>,
}

impl OrbitCount {
    pub fn count(&self) -> usize {
        self.orbits.len()
    }
}

/// Rational-`q` gate and gap determinants of both branches.
pub fn check_level_hypotheses(params: &ModelParams, tol: f64) -> Result<[f64; 2]> {
    if let Some(ratio) = detect_rational(params.q) {
        return Err(Error::Resonance(format!(
            "q = {} = {}/{} is rational; the linear modes are commensurable and first-order averaging \
             yields no periodic orbit here",
            params.q, ratio.num, ratio.den
        )));
    }
    let dets = Branch::BOTH.map(|b| gap_matrix(b, params).det_delta);
    if let Some(det) = dets.iter().find(|d| d.abs() <= tol) {
        return Err(Error::HypothesisViolated { flag: HypothesisFlag::SingularDelta, det: *det });
    }
    Ok(dets)
}

/// Full pipeline on one energy level: hypotheses, zeros of the averaged
/// function on both branches, and shooting from every predicted orbit.
pub fn count_orbits_per_level(
    params: &ModelParams,
    h: EnergyLevel,
    eps: f64,
    averaging: &AveragingConfig,
    cfg: &ShootingConfig,
) -> Result<OrbitCount> {
    params.validate()?;
    check_level_hypotheses(params, averaging.hypothesis_tol)?;
    let mut orbits: Vec<PeriodicOrbitResult> = Vec::new();
    let mut inconclusive = Vec::new();
    for branch in Branch::BOTH {
        let report = analyze_branch(params, branch, h, averaging)?;
        if report.degenerate {
            inconclusive.push(branch);
            continue;
        }
        let mut seen = Vec::new();
        for zero in report.simple_zeros() {
            if seen.contains(&zero.orbit_id) {
                continue;
            }
            seen.push(zero.orbit_id);
            let anchor = FamilyAnchor::from_amplitude(branch, zero.alpha, h, params.q)?;
            let orbit = shoot_periodic(params, eps, branch, &anchor.phase_state(), anchor.period(), h, cfg)?;
            if !orbits.iter().any(|o| o.ic.distance(&orbit.ic) < 1e-8) {
                orbits.push(orbit);
            }
        }
    }
    Ok(OrbitCount { orbits, inconclusive })
}
