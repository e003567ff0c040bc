//! Quadrature over one period for integrands with double poles.
//!
//! The averaged integrand of the model has the form `N(t) / P(t)^2` with
//! `P` a pure sinusoid that vanishes twice per period. The integral is
//! understood as the finite part: the symmetric limit with the divergent
//! `1/delta` contribution removed. Two independent schemes are provided:
//!
//! * [`Scheme::ClosedFormSubtraction`] splits off `c / P^2`, whose finite
//!   part over whole periods is zero (its antiderivative `tan` is periodic),
//!   and integrates the smooth remainder with the periodic trapezoid rule.
//! * [`Scheme::SymmetricExcision`] removes `[s - delta, s + delta]` around
//!   every singular time, integrates the rest with graded Gauss-Legendre
//!   panels, and extrapolates `I(delta) = A/delta + B + C delta` to `B`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `cos_coeff cos(omega t) + sin_coeff sin(omega t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    pub cos_coeff: f64,
    pub sin_coeff: f64,
    pub omega: f64,
}

impl Sinusoid {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.cos_coeff * c + self.sin_coeff * s
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (s, c) = (self.omega * t).sin_cos();
        self.omega * (self.sin_coeff * c - self.cos_coeff * s)
    }

    pub fn amplitude(&self) -> f64 {
        self.cos_coeff.hypot(self.sin_coeff)
    }

    /// Zeros in `[0, period)`, ascending. Writing the sinusoid as
    /// `R cos(omega t - phi)`, they sit at `omega t = phi + pi/2 + k pi`.
    pub fn zeros_in(&self, period: f64) -> Vec<f64> {
        if self.amplitude() == 0.0 || self.omega <= 0.0 {
            return Vec::new();
        }
        let phi = self.sin_coeff.atan2(self.cos_coeff);
        let spacing = PI / self.omega;
        let first = ((phi + PI / 2.0) / self.omega).rem_euclid(spacing);
        let mut zeros = Vec::new();
        let mut t = first;
        while t < period - 1e-14 * period {
            zeros.push(t);
            t += spacing;
        }
        zeros
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ClosedFormSubtraction,
    SymmetricExcision,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    pub nodes: usize,
    /// Declared singular times in `[0, T)`. `None` takes them from the
    /// family; a declared list must contain every pole the family has.
    pub singular_times: Option<Vec<f64>>,
    pub scheme: Scheme,
    pub excision_half_width: f64,
    /// Relative agreement required between the `n` and `2n` trapezoid sums.
    pub integrity_tol: f64,
}

pub const MIN_NODES: usize = 64;

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes: 256,
            singular_times: None,
            scheme: Scheme::ClosedFormSubtraction,
            excision_half_width: 1e-3,
            integrity_tol: 1e-9,
        }
    }
}

impl QuadratureSpec {
    pub fn excision() -> Self {
        Self { scheme: Scheme::SymmetricExcision, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes < MIN_NODES {
            return Err(Error::Domain(format!("quadrature needs at least {MIN_NODES} nodes, got {}", self.nodes)));
        }
        if self.scheme == Scheme::SymmetricExcision && !(self.excision_half_width > 0.0) {
            return Err(Error::Domain("excision half-width must be positive".into()));
        }
        Ok(())
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf - 1.0) * z * p2 - (jf - 1.0) * p3) / jf;
            }
            dp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point Gauss-Legendre on `[lo, hi]`.
pub fn gl_panel<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> f64 {
    let (nodes, weights) = gl16();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    half * nodes.iter().zip(weights).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
}

/// Periodic trapezoid sum `T/n * sum f(offset + k T/n)`.
pub fn periodic_trapezoid<F: Fn(f64) -> f64>(f: &F, period: f64, n: usize, offset: f64) -> f64 {
    let step = period / n as f64;
    step * (0..n).map(|k| f(offset + k as f64 * step)).sum::<f64>()
}

/// Distance from `t` to the nearest node of the grid `offset + k step`.
fn distance_to_grid(t: f64, offset: f64, step: f64) -> f64 {
    let u = (t - offset).rem_euclid(step);
    u.min(step - u)
}

/// Finite-part integral over `[0, period)` of `g`, whose only singularities
/// are double poles at the zeros of `denominator`, via closed-form
/// subtraction of `c / P^2`.
pub fn finite_part_subtraction<F: Fn(f64) -> f64>(
    g: &F,
    period: f64,
    denominator: Option<&Sinusoid>,
    nodes: usize,
    integrity_tol: f64,
) -> Result<f64> {
    let zeros = denominator.map(|d| d.zeros_in(period)).unwrap_or_default();
    let Some(den) = denominator.filter(|_| !zeros.is_empty()) else {
        return checked_trapezoid(g, period, nodes, 0.0, integrity_tol);
    };

    let half_periods = den.omega * period / PI;
    if (half_periods - half_periods.round()).abs() > 1e-9 || half_periods.round() < 1.0 {
        return Err(Error::QuadratureIntegrity(format!(
            "denominator period does not divide the integration period (omega T / pi = {half_periods})"
        )));
    }

    // Strength of the double pole: c = lim P^2 g. Richardson on the even part
    // of N(t) = P(t)^2 g(t) removes the O(u^2) term.
    let numerator = |t: f64| {
        let p = den.eval(t);
        p * p * g(t)
    };
    let u = 1e-4 / den.omega;
    let strength = |s: f64| {
        let even = |u: f64| 0.5 * (numerator(s + u) + numerator(s - u));
        (4.0 * even(u) - even(2.0 * u)) / 3.0
    };
    let c = strength(zeros[0]);
    for &s in &zeros[1..] {
        let cj = strength(s);
        if (cj - c).abs() > 1e-8 * (1.0 + c.abs()) {
            return Err(Error::QuadratureIntegrity(format!(
                "double poles of unequal strength ({c} at t={}, {cj} at t={s})",
                zeros[0]
            )));
        }
    }
    if !c.is_finite() {
        return Err(Error::QuadratureIntegrity("non-finite pole strength".into()));
    }

    let remainder = |t: f64| {
        let p = den.eval(t);
        g(t) - c / (p * p)
    };
    // Place the poles halfway between nodes; with zeros spaced by pi/omega
    // and an even node count per half-period this holds for every pole.
    let offset = zeros[0] + 0.5 * period / nodes as f64;
    let step = period / nodes as f64;
    for &s in &zeros {
        if distance_to_grid(s, offset, step) < 0.25 * step {
            return Err(Error::QuadratureIntegrity(format!(
                "pole at t={s} too close to the trapezoid grid; use a node count divisible by {}",
                2 * zeros.len()
            )));
        }
    }
    checked_trapezoid(&remainder, period, nodes, offset, integrity_tol)
}

/// Trapezoid at `n` and `2n` nodes; an undeclared singularity destroys the
/// spectral convergence and shows up as disagreement.
fn checked_trapezoid<F: Fn(f64) -> f64>(f: &F, period: f64, n: usize, offset: f64, tol: f64) -> Result<f64> {
    let step = period / n as f64;
    let coarse = periodic_trapezoid(f, period, n, offset);
    let fine = periodic_trapezoid(f, period, 2 * n, offset - 0.25 * step);
    if !(coarse.is_finite() && fine.is_finite()) {
        return Err(Error::QuadratureIntegrity("non-finite integrand on the trapezoid grid".into()));
    }
    let scale = 1.0 + step * (0..n).map(|k| f(offset + k as f64 * step).abs()).sum::<f64>();
    if (coarse - fine).abs() > tol * scale {
        return Err(Error::QuadratureIntegrity(format!(
            "trapezoid sums disagree ({coarse} with {n} nodes, {fine} with {} nodes); undeclared singularity?",
            2 * n
        )));
    }
    Ok(fine)
}

/// Graded Gauss-Legendre integral over `[pole + delta, pole + reach]`,
/// panels doubling in length away from the pole. `dir` is `+1` to walk
/// right of the pole and `-1` to walk left.
///
/// The node `pole + u` is rounded to some `pole + u'`; near a double pole
/// that shifts `g` by a relative `2 (u' - u) / u`, which the factor
/// `(u'/u)^2` undoes to leading order.
fn graded_from_pole<F: Fn(f64) -> f64>(g: &F, pole: f64, dir: f64, delta: f64, reach: f64) -> f64 {
    let local = |u: f64| {
        let t = pole + dir * u;
        let actual = dir * (t - pole);
        g(t) * (actual / u).powi(2)
    };
    let mut total = 0.0;
    let mut near = delta;
    while near < reach {
        let far = (2.0 * near).min(reach);
        total += gl_panel(&local, near, far);
        near = far;
    }
    total
}

/// Excised integral `I(delta)` over one period.
pub fn excised_integral<F: Fn(f64) -> f64>(g: &F, period: f64, singular: &[f64], delta: f64) -> Result<f64> {
    if singular.is_empty() {
        let panels = 64;
        let w = period / panels as f64;
        return Ok((0..panels).map(|k| gl_panel(g, k as f64 * w, (k + 1) as f64 * w)).sum());
    }
    let mut poles = singular.to_vec();
    poles.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for (j, &left) in poles.iter().enumerate() {
        let right = poles.get(j + 1).copied().unwrap_or(poles[0] + period);
        let reach = 0.5 * (right - left);
        if reach <= delta {
            return Err(Error::QuadratureIntegrity(format!(
                "excision half-width {delta} exceeds half the pole spacing {reach}"
            )));
        }
        total += graded_from_pole(g, left, 1.0, delta, reach);
        total += graded_from_pole(g, right, -1.0, delta, reach);
    }
    Ok(total)
}

/// Finite part by symmetric excision. `I(delta) = A/delta + B + C delta`
/// up to `O(delta^3)`; `B` is recovered from `delta I(delta)` at `delta`,
/// `2 delta`, `4 delta` as the slope of the interpolating quadratic. Going
/// outward from `delta` keeps the node rounding error near the poles,
/// which grows like `delta^-2`, at its smallest.
pub fn finite_part_excision<F: Fn(f64) -> f64>(g: &F, period: f64, singular: &[f64], delta: f64) -> Result<f64> {
    if singular.is_empty() {
        return excised_integral(g, period, singular, delta);
    }
    let phi = |d: f64| -> Result<f64> { Ok(d * excised_integral(g, period, singular, d)?) };
    let (p1, p2, p4) = (phi(delta)?, phi(2.0 * delta)?, phi(4.0 * delta)?);
    let b = (-4.0 * p1 + 5.0 * p2 - p4) / (2.0 * delta);
    if !b.is_finite() {
        return Err(Error::QuadratureIntegrity("non-finite excision estimate".into()));
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 30 monomial: integral 2/31
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((i - 2.0 / 31.0).abs() < 1e-14);
        let (x5, w5) = gauss_legendre(5);
        assert!((x5[2]).abs() < 1e-15);
        assert!((w5[2] - 128.0 / 225.0).abs() < 1e-14);
    }

    #[test]
    fn sinusoid_zeros() {
        let s = Sinusoid { cos_coeff: 0.8, sin_coeff: -0.6, omega: 1.0 };
        let z = s.zeros_in(TAU);
        assert_eq!(z.len(), 2);
        for t in &z {
            assert!(s.eval(*t).abs() < 1e-15);
            assert!((0.0..TAU).contains(t));
        }
        assert!((z[1] - z[0] - PI).abs() < 1e-14);
        let slow = Sinusoid { cos_coeff: 1.0, sin_coeff: 0.3, omega: 1.0 / 2.0f64.sqrt() };
        let period = TAU * 2.0f64.sqrt();
        let z = slow.zeros_in(period);
        assert_eq!(z.len(), 2);
        for t in &z {
            assert!(slow.eval(*t).abs() < 1e-15);
        }
    }

    /// Finite part of `1/P^2` over a period is zero.
    #[test]
    fn inverse_square_finite_part_vanishes() {
        let p = Sinusoid { cos_coeff: 0.8, sin_coeff: -0.6, omega: 1.0 };
        let g = |t: f64| 1.0 / p.eval(t).powi(2);
        let zeros = p.zeros_in(TAU);
        let excision = finite_part_excision(&g, TAU, &zeros, 1e-4).unwrap();
        assert!(excision.abs() <= 1e-6, "{excision}");
        let subtraction = finite_part_subtraction(&g, TAU, Some(&p), 256, 1e-9).unwrap();
        assert!(subtraction.abs() <= 1e-12, "{subtraction}");
    }

    /// Against the analytic finite part of `(1 + P^2 + P^4) / P^2`, i.e. the
    /// mean of `1 + P^2` times the period.
    #[test]
    fn schemes_reproduce_known_finite_part() {
        let p = Sinusoid { cos_coeff: 0.3, sin_coeff: 1.1, omega: 1.0 };
        let r2 = p.amplitude().powi(2);
        let g = |t: f64| {
            let v = p.eval(t);
            (1.0 + v * v + v.powi(4)) / (v * v)
        };
        let expected = TAU * (1.0 + 0.5 * r2);
        let zeros = p.zeros_in(TAU);
        let sub = finite_part_subtraction(&g, TAU, Some(&p), 128, 1e-9).unwrap();
        assert!((sub - expected).abs() < 1e-11, "{sub} vs {expected}");
        let exc = finite_part_excision(&g, TAU, &zeros, 1e-4).unwrap();
        assert!((exc - expected).abs() < 1e-7, "{exc} vs {expected}");
    }

    #[test]
    fn unequal_pole_strengths_are_refused() {
        let p = Sinusoid { cos_coeff: 1.0, sin_coeff: 0.0, omega: 1.0 };
        // numerator differs between t = pi/2 and 3 pi/2
        let g = |t: f64| (2.0 + t.sin()) / p.eval(t).powi(2);
        assert!(matches!(finite_part_subtraction(&g, TAU, Some(&p), 128, 1e-9), Err(Error::QuadratureIntegrity(_))));
    }

    #[test]
    fn undeclared_pole_is_detected() {
        // pole at t = 1 the caller did not tell us about
        let g = |t: f64| 1.0 / (t.cos() - 1f64.cos()).powi(2);
        assert!(matches!(checked_trapezoid(&g, TAU, 128, 0.013, 1e-9), Err(Error::QuadratureIntegrity(_))));
    }

    #[test]
    fn smooth_periodic_trapezoid_is_spectral() {
        let g = |t: f64| (t.sin()).exp();
        // integral of exp(sin t) over a period is 2 pi I0(1)
        let expected = TAU * 1.266_065_877_752_008_4;
        let v = checked_trapezoid(&g, TAU, 64, 0.0, 1e-12).unwrap();
        assert!((v - expected).abs() < 1e-13);
    }

    #[test]
    fn settings_validation() {
        assert!(QuadratureSpec::default().validate().is_ok());
        assert!(QuadratureSpec { nodes: 32, ..Default::default() }.validate().is_err());
        assert!(QuadratureSpec { excision_half_width: 0.0, ..QuadratureSpec::excision() }.validate().is_err());
    }
}
