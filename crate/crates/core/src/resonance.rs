//! Detection of rational frequency ratios.

/// Largest denominator considered when testing `q` for rationality.
pub const MAX_DENOMINATOR: u64 = 10_000;

/// Distance below which `q` is identified with a convergent.
pub const MATCH_TOL: f64 = 1e-12;

/// Reduced fraction `r / s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Walks the continued-fraction convergents of `q > 0` and returns the first
/// one with denominator at most `max_den` lying within `tol` of `q`.
pub fn rational_approximation(q: f64, max_den: u64, tol: f64) -> Option<Ratio> {
    if !(q.is_finite() && q > 0.0) {
        return None;
    }
    // h_{n} = a_n h_{n-1} + h_{n-2}, k likewise
    let (mut h_prev, mut h) = (0u128, 1u128);
    let (mut k_prev, mut k) = (1u128, 0u128);
    let mut rest = q;
    for _ in 0..64 {
        let a = rest.floor();
        if a > 1e15 {
            break;
        }
        let a_int = a as u128;
        let h_next = a_int * h + h_prev;
        let k_next = a_int * k + k_prev;
        if k_next > max_den as u128 {
            break;
        }
        (h_prev, h, k_prev, k) = (h, h_next, k, k_next);
        let ratio = Ratio { num: h as u64, den: k as u64 };
        if (ratio.value() - q).abs() <= tol {
            return Some(ratio);
        }
        let frac = rest - a;
        if frac <= 0.0 {
            break;
        }
        rest = 1.0 / frac;
    }
    None
}

/// The gate used by the orbit pipeline.
pub fn detect_rational(q: f64) -> Option<Ratio> {
    rational_approximation(q, MAX_DENOMINATOR, MATCH_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    #[test]
    fn rationals_are_detected() {
        assert_eq!(detect_rational(0.5), Some(Ratio { num: 1, den: 2 }));
        assert_eq!(detect_rational(1.0), Some(Ratio { num: 1, den: 1 }));
        assert_eq!(detect_rational(3.0), Some(Ratio { num: 3, den: 1 }));
        assert_eq!(detect_rational(1.5), Some(Ratio { num: 3, den: 2 }));
        assert_eq!(detect_rational(2.0 / 3.0), Some(Ratio { num: 2, den: 3 }));
        assert_eq!(detect_rational(355.0 / 113.0), Some(Ratio { num: 355, den: 113 }));
        assert_eq!(detect_rational(1.0 / 7919.0), Some(Ratio { num: 1, den: 7919 }));
    }

    #[test]
    fn irrationals_pass() {
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        for q in [SQRT_2, golden, PI, 3f64.sqrt(), std::f64::consts::E, 1.0 / SQRT_2] {
            assert_eq!(detect_rational(q), None, "q = {q}");
        }
    }

    #[test]
    fn bad_input_is_not_rational() {
        assert_eq!(detect_rational(-1.0), None);
        assert_eq!(detect_rational(f64::NAN), None);
        assert_eq!(detect_rational(0.0), None);
    }
}
