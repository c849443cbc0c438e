//! Wilson score confidence intervals, reported as rounded percentages.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile, to the precision used in published tables.
pub const Z95: f64 = 1.959964;

fn z_for(confidence: f64) -> Result<f64> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::Precondition(format!("confidence {confidence} outside (0, 1)")));
    }
    if confidence == 0.95 {
        return Ok(Z95);
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(1.0 - (1.0 - confidence) / 2.0))
}

/// Unrounded Wilson bounds as fractions in `[0, 1]`.
pub fn wilson_bounds(successes: u64, trials: u64, z: f64) -> Result<(f64, f64)> {
    if trials == 0 || successes > trials {
        return Err(Error::Precondition(format!(
            "wilson interval needs 0 <= successes <= trials and trials >= 1 (got {successes}/{trials})"
        )));
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Ok(((center - half).max(0.0), (center + half).min(1.0)))
}

pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Wilson interval as percentages rounded to one decimal.
pub fn wilson_ci(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    let (lo, hi) = wilson_bounds(successes, trials, z_for(confidence)?)?;
    Ok((round1(lo * 100.0), round1(hi * 100.0)))
}

/// `"80.0% [65.2, 89.5]"`.
pub fn format_rate(successes: u64, trials: u64) -> Result<String> {
    let (lo, hi) = wilson_ci(successes, trials, 0.95)?;
    let rate = round1(successes as f64 / trials as f64 * 100.0);
    Ok(format!("{rate:.1}% [{lo:.1}, {hi:.1}]"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_strings() {
        assert_eq!(format_rate(32, 40).unwrap(), "80.0% [65.2, 89.5]");
        assert_eq!(wilson_ci(9, 10, 0.95).unwrap(), (59.6, 98.2));
        assert_eq!(wilson_ci(14, 20, 0.95).unwrap(), (48.1, 85.5));
    }

    #[test]
    fn extremes_and_errors() {
        assert_eq!(wilson_ci(0, 10, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_ci(10, 10, 0.95).unwrap().1, 100.0);
        assert!(wilson_ci(3, 2, 0.95).is_err());
        assert!(wilson_ci(0, 0, 0.95).is_err());
    }

    #[test]
    fn other_confidence_levels_widen() {
        let (lo95, hi95) = wilson_ci(14, 20, 0.95).unwrap();
        let (lo99, hi99) = wilson_ci(14, 20, 0.99).unwrap();
        assert!(lo99 < lo95 && hi99 > hi95);
    }
}
