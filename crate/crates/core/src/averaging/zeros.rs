//! Zeros of a scalar bifurcation function on an interval.

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroSearchConfig {
    pub scan_points: usize,
    pub zero_tol: f64,
    pub deriv_tol: f64,
    /// Central-difference step for the simplicity test, in chart units.
    pub fd_step: f64,
}

impl Default for ZeroSearchConfig {
    fn default() -> Self {
        Self { scan_points: 512, zero_tol: 1e-10, deriv_tol: 1e-6, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChartKind {
    Amplitude,
    Angle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocatedZero {
    /// Coordinate in the chart the search ran in.
    pub param: f64,
    /// Amplitude coordinate of the zero.
    pub alpha: f64,
    pub value: f64,
    /// Derivative with respect to the search chart.
    pub derivative: f64,
    pub simple: bool,
    pub chart: ChartKind,
    /// Zeros whose unperturbed orbits coincide share an identifier.
    pub orbit_id: usize,
}

/// Scans `f` on `scan_points` equispaced points of `domain`, brackets sign
/// changes, and refines them by bisection followed by safeguarded secant
/// steps. Runs of samples already below the zero tolerance collapse into a
/// single candidate; an identically vanishing function therefore yields one
/// non-simple zero. `to_alpha` maps the search chart to the amplitude chart
/// (the search is then reported as [`ChartKind::Angle`]).
pub fn find_zeros<F>(
    f: F,
    domain: (f64, f64),
    to_alpha: Option<&dyn Fn(f64) -> f64>,
    cfg: &ZeroSearchConfig,
) -> Result<Vec<LocatedZero>>
where
    F: Fn(f64) -> Result<f64>,
{
    let (lo, hi) = domain;
    let n = cfg.scan_points.max(3);
    let grid: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let values = grid.iter().map(|&p| f(p)).collect::<Result<Vec<f64>>>()?;

    let mut candidates = Vec::new();
    let mut i = 0;
    while i < n {
        if values[i].abs() <= cfg.zero_tol {
            let start = i;
            while i + 1 < n && values[i + 1].abs() <= cfg.zero_tol {
                i += 1;
            }
            candidates.push((grid[(start + i) / 2], values[(start + i) / 2]));
            i += 1;
            continue;
        }
        if i + 1 < n && values[i + 1].abs() > cfg.zero_tol && values[i].signum() != values[i + 1].signum() {
            if let Some(root) = refine(&f, (grid[i], values[i]), (grid[i + 1], values[i + 1]), cfg.zero_tol)? {
                candidates.push(root);
            }
        }
        if i > 0 && i + 1 < n {
            let (l, m, r) = (values[i - 1], values[i], values[i + 1]);
            let same_sign = l.signum() == m.signum() && m.signum() == r.signum();
            if same_sign && m.abs() < l.abs() && m.abs() <= r.abs() && r.abs() > cfg.zero_tol {
                if let Some(touch) = tangency(&f, grid[i - 1], grid[i + 1], cfg.zero_tol)? {
                    candidates.push(touch);
                }
            }
        }
        i += 1;
    }

    let chart = if to_alpha.is_some() { ChartKind::Angle } else { ChartKind::Amplitude };
    candidates
        .into_iter()
        .map(|(p, value)| {
            let derivative = derivative(&f, p, domain, cfg.fd_step)?;
            Ok(LocatedZero {
                param: p,
                alpha: to_alpha.map_or(p, |m| m(p)),
                value,
                derivative,
                simple: derivative.abs() > cfg.deriv_tol,
                chart,
                orbit_id: 0,
            })
        })
        .collect()
}

fn refine<F>(f: &F, mut a: (f64, f64), mut b: (f64, f64), zero_tol: f64) -> Result<Option<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let width0 = (b.0 - a.0).abs();
    // bisection to a narrow bracket, then secant kept inside the bracket
    while (b.0 - a.0).abs() > 1e-4 * width0 {
        let m = 0.5 * (a.0 + b.0);
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(Some((m, fm)));
        }
        if fm.signum() == a.1.signum() {
            a = (m, fm);
        } else {
            b = (m, fm);
        }
    }
    for _ in 0..200 {
        let best = if a.1.abs() < b.1.abs() { a } else { b };
        if best.1.abs() <= 1e-3 * zero_tol {
            return Ok(Some(best));
        }
        let mut m = b.0 - b.1 * (b.0 - a.0) / (b.1 - a.1);
        let (left, right) = (a.0.min(b.0), a.0.max(b.0));
        if !(m > left && m < right) {
            m = 0.5 * (a.0 + b.0);
        }
        if m == a.0 || m == b.0 {
            break;
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(Some((m, fm)));
        }
        if fm.signum() == a.1.signum() {
            a = (m, fm);
        } else {
            b = (m, fm);
        }
    }
    let best = if a.1.abs() < b.1.abs() { a } else { b };
    Ok((best.1.abs() <= zero_tol).then_some(best))
}

/// Golden-section minimisation of `|f|` on `[lo, hi]`; catches zeros where
/// `f` touches zero between two grid points without changing sign.
fn tangency<F>(f: &F, mut lo: f64, mut hi: f64, zero_tol: f64) -> Result<Option<(f64, f64)>>
where
    F: Fn(f64) -> Result<f64>,
{
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let m1 = hi - g * (hi - lo);
        let m2 = lo + g * (hi - lo);
        if f(m1)?.abs() < f(m2)?.abs() {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let m = 0.5 * (lo + hi);
    let v = f(m)?;
    Ok((v.abs() <= zero_tol).then_some((m, v)))
}

fn derivative<F>(f: &F, p: f64, (lo, hi): (f64, f64), step: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    if p - step >= lo && p + step <= hi {
        Ok((f(p + step)? - f(p - step)?) / (2.0 * step))
    } else if p + step <= hi {
        Ok((f(p + step)? - f(p)?) / step)
    } else {
        Ok((f(p)? - f(p - step)?) / step)
    }
}
