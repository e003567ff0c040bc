//! Dormand-Prince 5(4) stepper with the fourth-order continuous extension.

use crate::error::{Error, Result};

use super::IntegratorConfig;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// step-size controller (Hairer's DOPRI5 defaults)
const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Continuous extension of one accepted step.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    /// Signed step.
    pub h: f64,
    /// `5 n` coefficients, `r_k` stored at `k n .. (k+1) n`.
    coeffs: Vec<f64>,
}

impl Segment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn contains(&self, t: f64) -> bool {
        let (lo, hi) = if self.h > 0.0 { (self.t0, self.t1()) } else { (self.t1(), self.t0) };
        t >= lo && t <= hi
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = |k: usize, i: usize| self.coeffs[k * n + i];
        for (i, o) in out.iter_mut().enumerate() {
            *o = r(0, i) + s * (r(1, i) + s1 * (r(2, i) + s * (r(3, i) + s1 * r(4, i))));
        }
    }

    /// Time derivative of the interpolant.
    pub fn derivative_into(&self, t: f64, out: &mut [f64]) {
        let n = out.len();
        let s = (t - self.t0) / self.h;
        let r = |k: usize, i: usize| self.coeffs[k * n + i];
        for (i, o) in out.iter_mut().enumerate() {
            // d/ds of r1 + s r2 + s(1-s) r3 + s^2 (1-s) r4 + s^2 (1-s)^2 r5
            let d = r(1, i)
                + (1.0 - 2.0 * s) * r(2, i)
                + (2.0 * s - 3.0 * s * s) * r(3, i)
                + (2.0 * s - 6.0 * s * s + 4.0 * s * s * s) * r(4, i);
            *o = d / self.h;
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Stepper state. The right-hand side writes `f(t, y)` into its third
/// argument; a non-finite output marks the point as outside the domain and
/// forces a smaller step.
pub struct Dopri<'a, F> {
    f: &'a F,
    cfg: IntegratorConfig,
    pub t: f64,
    pub y: Vec<f64>,
    /// `f(t, y)`, reused as the first stage.
    pub dy: Vec<f64>,
    h: f64,
    facold: f64,
    pub stats: StepStats,
    k: [Vec<f64>; 6],
    y_stage: Vec<f64>,
    y_new: Vec<f64>,
}

impl<'a, F> Dopri<'a, F>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    pub fn new(f: &'a F, t0: f64, y0: &[f64], t_end: f64, cfg: IntegratorConfig) -> Result<Self> {
        let n = y0.len();
        let mut dy = vec![0.0; n];
        f(t0, y0, &mut dy);
        if !(y0.iter().all(|v| v.is_finite()) && dy.iter().all(|v| v.is_finite())) {
            return Err(Error::Integration { t: t0, reason: "field not finite at the initial condition".into() });
        }
        let mut stepper = Self {
            f,
            cfg,
            t: t0,
            y: y0.to_vec(),
            dy,
            h: 0.0,
            facold: 1e-4,
            stats: StepStats { evaluations: 1, ..StepStats::default() },
            k: std::array::from_fn(|_| vec![0.0; n]),
            y_stage: vec![0.0; n],
            y_new: vec![0.0; n],
        };
        stepper.h = stepper.initial_step(t_end);
        Ok(stepper)
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.cfg.atol + self.cfg.rtol * a.abs().max(b.abs())
    }

    fn initial_step(&mut self, t_end: f64) -> f64 {
        let n = self.y.len() as f64;
        let dir = (t_end - self.t).signum();
        let span = (t_end - self.t).abs();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.dy[i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let mut h0 = if d0 < 1e-10 || d1 < 1e-10 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.cfg.max_step).min(span);
        for i in 0..self.y.len() {
            self.y_stage[i] = self.y[i] + dir * h0 * self.dy[i];
        }
        (self.f)(self.t + dir * h0, &self.y_stage, &mut self.k[1]);
        self.stats.evaluations += 1;
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sk = self.scale(self.y[i], self.y[i]);
            d2 += ((self.k[1][i] - self.dy[i]) / sk).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let big = d1.max(d2);
        let h1 = if big <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / big).powf(0.2) };
        let h = (100.0 * h0).min(h1).min(self.cfg.max_step).min(span);
        if h.is_finite() && h > 0.0 {
            dir * h
        } else {
            dir * span.min(1e-6)
        }
    }

    /// Single explicit step of size `h` from `(t, y)` with first stage `dy`,
    /// writing the fifth-order result to `y_new` and stages to `k`. Returns
    /// the scaled error norm.
    fn attempt(&mut self, h: f64) -> f64 {
        let n = self.y.len();
        let (t, y, f) = (self.t, &self.y, self.f);
        let [k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ys = &mut self.y_stage;
        let k1 = &self.dy;
        for i in 0..n {
            ys[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, ys, k2);
        for i in 0..n {
            ys[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, ys, k3);
        for i in 0..n {
            ys[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, ys, k4);
        for i in 0..n {
            ys[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, ys, k5);
        for i in 0..n {
            ys[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, ys, k6);
        let yn = &mut self.y_new;
        for i in 0..n {
            yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, yn, k7);
        self.stats.evaluations += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sk = self.cfg.atol + self.cfg.rtol * y[i].abs().max(yn[i].abs());
            err += (e / sk).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if err.is_finite() && yn.iter().chain(k7.iter()).all(|v| v.is_finite()) {
            err
        } else {
            f64::INFINITY
        }
    }

    fn segment(&self, h: f64) -> Segment {
        let n = self.y.len();
        let mut coeffs = vec![0.0; 5 * n];
        let [_, k3, k4, k5, k6, k7] = &self.k;
        let k1 = &self.dy;
        for i in 0..n {
            let ydiff = self.y_new[i] - self.y[i];
            let bspl = h * k1[i] - ydiff;
            coeffs[i] = self.y[i];
            coeffs[n + i] = ydiff;
            coeffs[2 * n + i] = bspl;
            coeffs[3 * n + i] = ydiff - h * k7[i] - bspl;
            coeffs[4 * n + i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
        }
        Segment { t0: self.t, h, coeffs }
    }

    /// Takes one accepted step towards `t_end` (never past it) and returns
    /// its continuous extension.
    pub fn step(&mut self, t_end: f64) -> Result<Segment> {
        let dir = (t_end - self.t).signum();
        loop {
            if self.stats.accepted + self.stats.rejected >= self.cfg.max_steps {
                return Err(Error::Integration {
                    t: self.t,
                    reason: format!("step limit {} exceeded", self.cfg.max_steps),
                });
            }
            let remaining = (t_end - self.t).abs();
            let mut h = self.h.abs().min(self.cfg.max_step);
            let last = h >= remaining * (1.0 - 1e-12);
            if last {
                h = remaining;
            }
            let h_signed = dir * h;
            if h <= 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(Error::Integration { t: self.t, reason: format!("step size underflow (h = {h:e})") });
            }
            let err = self.attempt(h_signed);
            if err <= 1.0 {
                let fac11 = err.powf(EXPO1);
                let fac = (fac11 / self.facold.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                self.facold = err.max(1e-4);
                let segment = self.segment(h_signed);
                self.t = if last { t_end } else { self.t + h_signed };
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(&mut self.dy, &mut self.k[5]);
                self.stats.accepted += 1;
                // keep the proposal from the unclipped step
                if !last || h / fac < self.h.abs() {
                    self.h = dir * h / fac;
                }
                return Ok(segment);
            }
            self.stats.rejected += 1;
            let shrink = if err.is_finite() { (err.powf(EXPO1) / SAFETY).min(1.0 / FAC_MIN) } else { 10.0 };
            self.h = dir * h / shrink;
        }
    }

    /// One step of exactly `h` from the current point, without error
    /// control; used to polish event times.
    pub fn exact_step(&mut self, h: f64, out: &mut [f64]) {
        self.attempt(h);
        out.copy_from_slice(&self.y_new);
    }
}
