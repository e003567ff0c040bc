//! Numeric values on the command line: plain decimals, fractions, a few
//! named constants and `sqrt(...)`, combined with `*` and `/`.

use std::f64::consts::{E, PI};

/// Parses one value such as `1.5`, `3/2`, `sqrt(2)`, `2*pi`, `1/phi`.
pub fn parse_value(src: &str) -> Result<f64, String> {
    let s: String = src.chars().filter(|c| !c.is_whitespace()).collect();
    if s.is_empty() {
        return Err("empty value".into());
    }
    let (v, rest) = product(&s)?;
    if !rest.is_empty() {
        return Err(format!("unexpected '{rest}' in '{src}'"));
    }
    if !v.is_finite() {
        return Err(format!("'{src}' is not finite"));
    }
    Ok(v)
}

fn product(s: &str) -> Result<(f64, &str), String> {
    let (mut acc, mut rest) = atom(s)?;
    loop {
        if let Some(r) = rest.strip_prefix('*') {
            let (v, r) = atom(r)?;
            acc *= v;
            rest = r;
        } else if let Some(r) = rest.strip_prefix('/') {
            let (v, r) = atom(r)?;
            acc /= v;
            rest = r;
        } else {
            return Ok((acc, rest));
        }
    }
}

fn atom(s: &str) -> Result<(f64, &str), String> {
    if let Some(r) = s.strip_prefix('-') {
        let (v, r) = atom(r)?;
        return Ok((-v, r));
    }
    for (name, value) in [("pi", PI), ("π", PI), ("phi", 0.5 * (1.0 + 5f64.sqrt())), ("e", E)] {
        if let Some(r) = s.strip_prefix(name) {
            // "e" must not swallow the start of a longer word
            if !r.starts_with(|c: char| c.is_ascii_alphabetic()) {
                return Ok((value, r));
            }
        }
    }
    if let Some(r) = s.strip_prefix("sqrt(").or_else(|| s.strip_prefix("√(")) {
        let (v, r) = product(r)?;
        let r = r.strip_prefix(')').ok_or_else(|| format!("missing ')' in '{s}'"))?;
        return Ok((v.sqrt(), r));
    }
    if let Some(r) = s.strip_prefix('√') {
        let (v, r) = atom(r)?;
        return Ok((v.sqrt(), r));
    }
    if let Some(r) = s.strip_prefix('(') {
        let (v, r) = product(r)?;
        let r = r.strip_prefix(')').ok_or_else(|| format!("missing ')' in '{s}'"))?;
        return Ok((v, r));
    }
    number(s)
}

fn number(s: &str) -> Result<(f64, &str), String> {
    let bytes = s.as_bytes();
    let mut end = 0;
    while end < bytes.len() {
        let c = bytes[end] as char;
        let exp_sign = (c == '-' || c == '+') && end > 0 && matches!(bytes[end - 1], b'e' | b'E');
        if c.is_ascii_digit() || c == '.' || c == 'e' || c == 'E' || exp_sign {
            end += 1;
        } else {
            break;
        }
    }
    let text = &s[..end];
    text.parse::<f64>().map(|v| (v, &s[end..])).map_err(|_| format!("cannot read a number from '{s}'"))
}

/// Comma-separated values, or `lo:hi:n` for `n` evenly spaced values.
pub fn parse_list(src: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = src.split(':').collect();
    if parts.len() == 3 {
        let lo = parse_value(parts[0])?;
        let hi = parse_value(parts[1])?;
        let n: usize = parts[2].trim().parse().map_err(|_| format!("bad point count in '{src}'"))?;
        return match n {
            0 => Err("range needs at least one point".into()),
            1 => Ok(vec![lo]),
            _ => Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()),
        };
    }
    if parts.len() != 1 {
        return Err(format!("ranges are written lo:hi:n, got '{src}'"));
    }
    src.split(',').map(parse_value).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn values() {
        assert_eq!(parse_value("1.5").unwrap(), 1.5);
        assert_eq!(parse_value("3/2").unwrap(), 1.5);
        assert_eq!(parse_value("sqrt(2)").unwrap(), SQRT_2);
        assert_eq!(parse_value("√2").unwrap(), SQRT_2);
        assert_eq!(parse_value("2*pi").unwrap(), 2.0 * PI);
        assert!((parse_value("phi").unwrap() - 1.618033988749895).abs() < 1e-15);
        assert_eq!(parse_value("1e-2").unwrap(), 0.01);
        assert_eq!(parse_value("-2.5e+1").unwrap(), -25.0);
        assert_eq!(parse_value("1/sqrt(2)").unwrap(), 1.0 / SQRT_2);
        assert_eq!(parse_value("e").unwrap(), E);
        assert!(parse_value("two").is_err());
        assert!(parse_value("1/0").is_err());
        assert!(parse_value("sqrt(2").is_err());
    }

    #[test]
    fn lists() {
        assert_eq!(parse_list("0.25, 0.5,1").unwrap(), vec![0.25, 0.5, 1.0]);
        assert_eq!(parse_list("1:2:3").unwrap(), vec![1.0, 1.5, 2.0]);
        assert!(parse_list("1:2").is_err());
        assert!(parse_list("1:2:0").is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn decimal_text_round_trips(v in -1e6f64..1e6) {
                prop_assert_eq!(parse_value(&format!("{v:e}")).unwrap(), v);
                prop_assert_eq!(parse_value(&v.to_string()).unwrap(), v);
            }

            #[test]
            fn fractions_divide(n in 1u32..1000, d in 1u32..1000) {
                prop_assert_eq!(parse_value(&format!("{n}/{d}")).unwrap(), n as f64 / d as f64);
            }
        }
    }
}
