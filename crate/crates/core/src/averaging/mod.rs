//! First-order averaging for families of periodic solutions.
//!
//! Given `x' = F0(t, x) + eps F1(t, x)` whose unperturbed part has a family
//! `z_alpha` of `T`-periodic solutions, the bifurcation function
//!
//! ```text
//! F(alpha) = xi( int_0^T M^-1(t) F1(t, x(t, z_alpha)) dt )
//! ```
//!
//! (with `M` a fundamental matrix of the linearisation and `xi` the
//! projection on the first `k` coordinates) has simple zeros that continue
//! to `T`-periodic solutions for small `eps`, provided the gap matrix
//! `M^-1(0) - M^-1(T)` has a zero upper-right block and an invertible
//! lower-right block. This module implements the engine for arbitrary
//! families; [`model_family`] plugs in the galactic Hamiltonian.

pub mod model_family;
pub mod quadrature;
pub mod zeros;

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, HypothesisFlag, Result};
use quadrature::{finite_part_excision, finite_part_subtraction, QuadratureSpec, Scheme, Sinusoid};

pub use model_family::{analyze_branch, tabulate, AverageRow, AveragingConfig, AveragingReport, Chart, ModelFamily};
pub use zeros::{find_zeros, ChartKind, LocatedZero, ZeroSearchConfig};

/// A chart `alpha -> z_alpha` of `T`-periodic solutions of the unperturbed
/// system together with fundamental matrices along them.
pub trait PeriodicFamily {
    /// Dimension `n` of the system.
    fn dim(&self) -> usize;
    /// Dimension `k` of the family chart.
    fn projected_dim(&self) -> usize {
        1
    }
    fn period(&self) -> f64;
    fn chart_domain(&self) -> (f64, f64);
    /// `x(t, z_alpha)`.
    fn solution(&self, alpha: f64, t: f64) -> Result<DVector<f64>>;
    /// Fundamental matrix with `M(0) = I`.
    fn fundamental(&self, alpha: f64, t: f64) -> Result<DMatrix<f64>>;
    fn fundamental_inverse(&self, alpha: f64, t: f64) -> Result<DMatrix<f64>> {
        self.fundamental(alpha, t)?
            .try_inverse()
            .ok_or_else(|| Error::Domain(format!("fundamental matrix singular at alpha={alpha}, t={t}")))
    }
    /// When the integrand has double poles, the sinusoid whose zeros they
    /// are. The integrand must then be `N(t) / P(t)^2` with `N` smooth, and
    /// `P` must be evaluated by the same code the family uses internally.
    fn singular_denominator(&self, _alpha: f64) -> Result<Option<Sinusoid>> {
        Ok(None)
    }
}

/// The perturbation `F1` evaluated along a family member. It receives the
/// chart coordinate because the model's reduced `F1` depends on the
/// continued square-root branch of the orbit.
pub trait Perturbation {
    fn eval(&self, alpha: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>>;
}

impl<F> Perturbation for F
where
    F: Fn(f64, f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    fn eval(&self, alpha: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        self(alpha, t, x)
    }
}

/// Gap matrix `M^-1(0) - M^-1(T)` and the flags of the averaging
/// hypotheses, worst case over the sampled chart points.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub gap: DMatrix<f64>,
    pub det_delta: f64,
    pub upper_right_max: f64,
    pub upper_right_zero: bool,
    pub delta_invertible: bool,
    pub sampled: Vec<f64>,
}

impl HypothesisReport {
    pub fn passed(&self) -> bool {
        self.upper_right_zero && self.delta_invertible
    }

    pub fn into_result(self) -> Result<Self> {
        if !self.upper_right_zero {
            Err(Error::HypothesisViolated { flag: HypothesisFlag::UpperRightBlock, det: self.det_delta })
        } else if !self.delta_invertible {
            Err(Error::HypothesisViolated { flag: HypothesisFlag::SingularDelta, det: self.det_delta })
        } else {
            Ok(self)
        }
    }
}

/// Evaluates the gap matrix at a few interior chart points. The inverse
/// fundamental matrices are obtained by numerically inverting `M(0)` and
/// `M(T)`, independent of any closed-form inverse the family offers.
pub fn hypothesis_diagnostics<P: PeriodicFamily + ?Sized>(family: &P, tol: f64) -> Result<HypothesisReport> {
    let (lo, hi) = family.chart_domain();
    let (n, k) = (family.dim(), family.projected_dim());
    let fractions = [0.5, 0.3, 0.7, 0.15, 0.85];
    let mut report: Option<HypothesisReport> = None;
    let mut sampled = Vec::new();
    for frac in fractions {
        let alpha = lo + frac * (hi - lo);
        let invert = |t: f64| -> Result<Option<DMatrix<f64>>> {
            match family.fundamental(alpha, t) {
                Ok(m) => Ok(m.try_inverse()),
                Err(Error::ChartSingular { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        };
        let (Some(m0), Some(mt)) = (invert(0.0)?, invert(family.period())?) else {
            continue;
        };
        sampled.push(alpha);
        let gap = m0 - mt;
        let upper = gap.view((0, k), (k, n - k)).amax();
        let det = gap.view((k, k), (n - k, n - k)).into_owned().determinant();
        let worse = match &report {
            None => true,
            Some(r) => det.abs() < r.det_delta.abs() || upper > r.upper_right_max,
        };
        if worse {
            report = Some(HypothesisReport {
                gap,
                det_delta: det,
                upper_right_max: upper,
                upper_right_zero: upper <= tol,
                delta_invertible: det.abs() > tol,
                sampled: Vec::new(),
            });
        }
    }
    let mut report = report.ok_or_else(|| Error::Domain("no chart point with a regular fundamental matrix".into()))?;
    report.sampled = sampled;
    Ok(report)
}

/// Like [`hypothesis_diagnostics`] but fails when a hypothesis is violated.
pub fn check_hypotheses<P: PeriodicFamily + ?Sized>(family: &P, tol: f64) -> Result<HypothesisReport> {
    hypothesis_diagnostics(family, tol)?.into_result()
}

/// Scalar integrand `xi_j(M^-1(t) F1(t, x(t, z_alpha)))`.
fn projected_integrand<P, F>(family: &P, f1: &F, alpha: f64, t: f64, component: usize) -> f64
where
    P: PeriodicFamily + ?Sized,
    F: Perturbation + ?Sized,
{
    let eval = || -> Result<f64> {
        let x = family.solution(alpha, t)?;
        let minv = family.fundamental_inverse(alpha, t)?;
        let f = f1.eval(alpha, t, &x)?;
        Ok(minv.row(component).dot(&f.transpose()))
    };
    eval().unwrap_or(f64::NAN)
}

/// All `k` components of `(1/2pi) xi( int_0^T M^-1 F1 dt )`.
pub fn averaged_vector<P, F>(family: &P, f1: &F, alpha: f64, quad: &QuadratureSpec) -> Result<Vec<f64>>
where
    P: PeriodicFamily + ?Sized,
    F: Perturbation + ?Sized,
{
    quad.validate()?;
    let period = family.period();
    let denominator = family.singular_denominator(alpha)?;
    let poles = denominator.map(|d| d.zeros_in(period)).unwrap_or_default();
    let singular = match &quad.singular_times {
        None => poles.clone(),
        Some(declared) => {
            let tol = 1e-9 * period;
            if let Some(missing) = poles.iter().find(|p| {
                !declared.iter().any(|d| {
                    let gap = (*p - d).rem_euclid(period);
                    gap.min(period - gap) <= tol
                })
            }) {
                return Err(Error::QuadratureIntegrity(format!(
                    "integrand singular at t={missing}, which is not among the declared singular times"
                )));
            }
            declared.clone()
        }
    };
    (0..family.projected_dim())
        .map(|j| {
            let g = |t: f64| projected_integrand(family, f1, alpha, t, j);
            let integral = match quad.scheme {
                Scheme::ClosedFormSubtraction => {
                    finite_part_subtraction(&g, period, denominator.as_ref(), quad.nodes, quad.integrity_tol)
                }
                Scheme::SymmetricExcision => finite_part_excision(&g, period, &singular, quad.excision_half_width),
            }?;
            Ok(integral / TAU)
        })
        .collect()
}

/// The scalar bifurcation function for a one-parameter family.
pub fn averaged_function<P, F>(family: &P, f1: &F, alpha: f64, quad: &QuadratureSpec) -> Result<f64>
where
    P: PeriodicFamily + ?Sized,
    F: Perturbation + ?Sized,
{
    if family.projected_dim() != 1 {
        return Err(Error::Domain(format!(
            "scalar averaged function needs k = 1, family has k = {}",
            family.projected_dim()
        )));
    }
    Ok(averaged_vector(family, f1, alpha, quad)?[0])
}

/// Whether `z_b` lies on the unperturbed orbit through `z_a`.
pub fn same_orbit<P: PeriodicFamily + ?Sized>(family: &P, a: f64, b: f64, tol: f64) -> Result<bool> {
    let target = family.solution(b, 0.0)?;
    let period = family.period();
    let dist = |t: f64| -> Result<f64> { Ok((family.solution(a, t)? - &target).norm()) };
    let samples = 512;
    let step = period / samples as f64;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..samples {
        let t = i as f64 * step;
        let d = dist(t)?;
        if d < best.1 {
            best = (t, d);
        }
    }
    // golden-section polish around the best sample
    let (mut lo, mut hi) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if dist(m1)? < dist(m2)? {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let d = dist(0.5 * (lo + hi))?.min(best.1);
    Ok(d <= tol * (1.0 + target.norm()))
}

/// Assigns shared identifiers to zeros whose unperturbed orbits coincide.
pub fn label_orbits<P: PeriodicFamily + ?Sized>(family: &P, zeros: &mut [LocatedZero]) -> Result<()> {
    let mut reps: Vec<(usize, f64)> = Vec::new();
    for z in zeros.iter_mut() {
        let mut id = None;
        for &(rid, ralpha) in &reps {
            if same_orbit(family, ralpha, z.param, 1e-8)? {
                id = Some(rid);
                break;
            }
        }
        z.orbit_id = match id {
            Some(rid) => rid,
            None => {
                let rid = reps.len();
                reps.push((rid, z.param));
                rid
            }
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `x1' = 0`, `x2' = -x2`: every `(alpha, 0)` is an equilibrium, hence
    /// `2 pi`-periodic, and `M = diag(1, e^-t)`.
    struct DampedLine;

    impl PeriodicFamily for DampedLine {
        fn dim(&self) -> usize {
            2
        }
        fn period(&self) -> f64 {
            TAU
        }
        fn chart_domain(&self) -> (f64, f64) {
            (-2.0, 2.0)
        }
        fn solution(&self, alpha: f64, _t: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![alpha, 0.0]))
        }
        fn fundamental(&self, _alpha: f64, t: f64) -> Result<DMatrix<f64>> {
            Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, (-t).exp()])))
        }
    }

    /// Harmonic oscillator `x1' = x2, x2' = -x1` with the family through
    /// `(alpha, 0)`; hypotheses fail (whole plane periodic) but the integral
    /// is smooth and checks the quadrature path.
    struct Oscillator;

    impl PeriodicFamily for Oscillator {
        fn dim(&self) -> usize {
            2
        }
        fn period(&self) -> f64 {
            TAU
        }
        fn chart_domain(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
        fn solution(&self, alpha: f64, t: f64) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![alpha * t.cos(), -alpha * t.sin()]))
        }
        fn fundamental(&self, _alpha: f64, t: f64) -> Result<DMatrix<f64>> {
            let (s, c) = t.sin_cos();
            Ok(DMatrix::from_row_slice(2, 2, &[c, s, -s, c]))
        }
    }

    fn poly_perturbation(_alpha: f64, t: f64, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(vec![x[0].powi(3) + x[1] + 0.3 * t.sin(), x[0] * x[0] * x[1] - x[1].powi(2)]))
    }

    #[test]
    fn engine_matches_dense_trapezoid_oracle() {
        let f1 = poly_perturbation;
        for alpha in [-0.8, -0.1, 0.4, 0.95] {
            let got = averaged_function(&Oscillator, &f1, alpha, &QuadratureSpec::default()).unwrap();
            // oracle: explicit rotation inverse, 20000-node trapezoid
            let n = 20_000;
            let oracle: f64 = (0..n)
                .map(|i| {
                    let t = TAU * i as f64 / n as f64;
                    let (x1, x2) = (alpha * t.cos(), -alpha * t.sin());
                    let f = [x1.powi(3) + x2 + 0.3 * t.sin(), x1 * x1 * x2 - x2 * x2];
                    t.cos() * f[0] - t.sin() * f[1]
                })
                .sum::<f64>()
                / n as f64;
            assert!((got - oracle).abs() < 1e-10, "alpha={alpha}: {got} vs {oracle}");
            let exc = averaged_function(&Oscillator, &f1, alpha, &QuadratureSpec::excision()).unwrap();
            assert!((exc - oracle).abs() < 1e-10);
        }
    }

    #[test]
    fn synthetic_family_hypotheses_and_zeros() {
        let report = check_hypotheses(&DampedLine, 1e-8).unwrap();
        assert!((report.det_delta - (1.0 - TAU.exp())).abs() < 1e-6 * TAU.exp());
        assert_eq!(report.upper_right_max, 0.0);

        let f1 = |_a: f64, t: f64, x: &DVector<f64>| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![x[0] * x[0] - 1.0 + t.sin() * x[0], 0.0]))
        };
        let f = |a: f64| averaged_function(&DampedLine, &f1, a, &QuadratureSpec::default());
        let mut z = find_zeros(f, DampedLine.chart_domain(), None, &ZeroSearchConfig::default()).unwrap();
        label_orbits(&DampedLine, &mut z).unwrap();
        assert_eq!(z.len(), 2);
        assert!((z[0].alpha + 1.0).abs() < 1e-10 && (z[1].alpha - 1.0).abs() < 1e-10);
        assert!(z.iter().all(|z| z.simple));
        assert!((z[0].derivative + 2.0).abs() < 1e-6);
        assert_ne!(z[0].orbit_id, z[1].orbit_id);
    }

    #[test]
    fn oscillator_fails_the_gap_hypothesis() {
        match check_hypotheses(&Oscillator, 1e-8) {
            Err(Error::HypothesisViolated { flag: HypothesisFlag::SingularDelta, det }) => assert!(det.abs() < 1e-8),
            other => panic!("expected violation, got {other:?}"),
        }
    }

    #[test]
    fn vector_form_requires_matching_k_for_scalar_api() {
        struct TwoDim;
        impl PeriodicFamily for TwoDim {
            fn dim(&self) -> usize {
                2
            }
            fn projected_dim(&self) -> usize {
                2
            }
            fn period(&self) -> f64 {
                TAU
            }
            fn chart_domain(&self) -> (f64, f64) {
                (-1.0, 1.0)
            }
            fn solution(&self, alpha: f64, t: f64) -> Result<DVector<f64>> {
                Oscillator.solution(alpha, t)
            }
            fn fundamental(&self, alpha: f64, t: f64) -> Result<DMatrix<f64>> {
                Oscillator.fundamental(alpha, t)
            }
        }
        let f1 = poly_perturbation;
        assert!(averaged_function(&TwoDim, &f1, 0.5, &QuadratureSpec::default()).is_err());
        let v = averaged_vector(&TwoDim, &f1, 0.5, &QuadratureSpec::default()).unwrap();
        assert_eq!(v.len(), 2);
    }
}
