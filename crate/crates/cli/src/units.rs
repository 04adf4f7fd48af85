//! Flag values with optional unit suffixes, e.g. `2500nm`, `1ms`, `5pW`.

use anyhow::{bail, Context, Result};

const LENGTH: &[(&str, f64)] = &[("nm", 1e-9), ("um", 1e-6), ("mm", 1e-3), ("m", 1.0)];
const TIME: &[(&str, f64)] = &[("us", 1e-6), ("ms", 1e-3), ("s", 1.0)];
const POWER: &[(&str, f64)] = &[("pW", 1e-12), ("nW", 1e-9), ("uW", 1e-6), ("mW", 1e-3), ("W", 1.0)];

fn parse_with(s: &str, units: &[(&str, f64)], kind: &str) -> Result<f64> {
    let s = s.trim();
    for (suffix, scale) in units {
        if let Some(num) = s.strip_suffix(suffix) {
            // "nm" also ends in "m"; only accept when what remains is a number
            if let Ok(v) = num.trim().parse::<f64>() {
                return Ok(v * scale);
            }
        }
    }
    let v: f64 = s
        .parse()
        .with_context(|| format!("invalid {kind} {s:?} (expected a number with optional unit)"))?;
    if !v.is_finite() {
        bail!("invalid {kind} {s:?}");
    }
    Ok(v)
}

/// Metres; bare numbers are metres.
pub fn length(s: &str) -> Result<f64> {
    parse_with(s, LENGTH, "length")
}

/// Seconds; bare numbers are seconds.
pub fn time(s: &str) -> Result<f64> {
    parse_with(s, TIME, "time")
}

/// Watts; bare numbers are watts.
pub fn power(s: &str) -> Result<f64> {
    parse_with(s, POWER, "power")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffixes() {
        assert!((length("2500nm").unwrap() - 2.5e-6).abs() < 1e-18);
        assert!((length("0.25um").unwrap() - 2.5e-7).abs() < 1e-18);
        assert_eq!(length("3e-7").unwrap(), 3e-7);
        assert!((time("1ms").unwrap() - 1e-3).abs() < 1e-18);
        assert!((power("5pW").unwrap() - 5e-12).abs() < 1e-24);
        assert!(length("ten nm").is_err());
    }
}
