//! Paired two-sided t-test over per-seed metric pairs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub degrees_of_freedom: usize,
    pub mean_difference: f64,
    /// Set when the paired differences have zero variance, where the t
    /// statistic is not defined. The p value is then 1 for identical
    /// samples and 0 for a constant nonzero shift.
    pub degenerate: bool,
}

/// Two-sided paired t-test of `a` against `b`. Positive `t` means `a`
/// scored higher on average.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            op: "paired t-test",
            detail: format!("{} vs {} samples", a.len(), b.len()),
        });
    }
    if a.len() < 2 {
        return Err(Error::Data("paired t-test needs at least two pairs".to_string()));
    }
    let n = a.len();
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::NonFinite { context: "paired differences".to_string() });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
    let dof = n - 1;
    if var == 0.0 {
        let (t, p) = if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (f64::INFINITY.copysign(mean), 0.0)
        };
        return Ok(TTestResult {
            t_statistic: t,
            p_value: p,
            degrees_of_freedom: dof,
            mean_difference: mean,
            degenerate: true,
        });
    }
    let se = (var / n as f64).sqrt();
    let t = mean / se;
    let dist = StudentsT::new(0.0, 1.0, dof as f64)
        .map_err(|e| Error::Config(format!("t distribution: {}", e)))?;
    let p = 2.0 * (1.0 - dist.cdf(t.abs()));
    Ok(TTestResult {
        t_statistic: t,
        p_value: p.clamp(0.0, 1.0),
        degrees_of_freedom: dof,
        mean_difference: mean,
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frozen_three_pair_example() {
        // Differences 1, 2, 3: mean 2, sample sd 1, t = 2 sqrt(3).
        let result = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(result.degrees_of_freedom, 2);
        assert!((result.t_statistic - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);
        assert!((result.mean_difference - 2.0).abs() < 1e-12);
        // Two-sided p at t = 3.4641, 2 dof, from tabulated values.
        assert!((result.p_value - 0.0742).abs() < 2e-4, "p = {}", result.p_value);
        assert!(!result.degenerate);
    }

    #[test]
    fn swapping_samples_negates_t_and_keeps_p() {
        let a = [0.71, 0.68, 0.74, 0.69];
        let b = [0.66, 0.67, 0.70, 0.66];
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        assert!((ab.t_statistic + ba.t_statistic).abs() < 1e-12);
        assert!((ab.p_value - ba.p_value).abs() < 1e-12);
        assert!(ab.t_statistic > 0.0);
    }

    #[test]
    fn shifting_both_samples_changes_nothing() {
        let a = [0.3, 0.5, 0.4, 0.6, 0.45];
        let b = [0.25, 0.48, 0.33, 0.61, 0.40];
        let shifted_a: Vec<f64> = a.iter().map(|v| v + 10.0).collect();
        let shifted_b: Vec<f64> = b.iter().map(|v| v + 10.0).collect();
        let plain = paired_t_test(&a, &b).unwrap();
        let shifted = paired_t_test(&shifted_a, &shifted_b).unwrap();
        assert!((plain.t_statistic - shifted.t_statistic).abs() < 1e-9);
        assert!((plain.p_value - shifted.p_value).abs() < 1e-9);
    }

    #[test]
    fn identical_samples_are_degenerate_with_p_one() {
        let a = [0.5, 0.6, 0.7];
        let result = paired_t_test(&a, &a).unwrap();
        assert!(result.degenerate);
        assert_eq!(result.p_value, 1.0);
        assert_eq!(result.t_statistic, 0.0);
    }

    #[test]
    fn constant_shift_is_degenerate_with_p_zero() {
        let a = [0.5, 0.6, 0.7];
        let b = [0.4, 0.5, 0.6];
        let result = paired_t_test(&a, &b).unwrap();
        assert!(result.degenerate);
        assert_eq!(result.p_value, 0.0);
        assert!(result.t_statistic.is_infinite() && result.t_statistic > 0.0);
    }

    #[test]
    fn more_consistent_gaps_give_smaller_p() {
        let base = [0.60, 0.62, 0.61, 0.63, 0.59];
        let consistent: Vec<f64> = base.iter().map(|v| v + 0.03).collect();
        let noisy = [0.72, 0.55, 0.70, 0.58, 0.68];
        let tight = paired_t_test(&consistent, &base).unwrap();
        let loose = paired_t_test(&noisy, &base).unwrap();
        assert!(tight.p_value < loose.p_value);
    }

    #[test]
    fn rejects_short_or_mismatched_input() {
        assert!(paired_t_test(&[1.0], &[0.5]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.5]).is_err());
        assert!(paired_t_test(&[1.0, f64::NAN], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn tabulated_critical_values_round_trip() {
        // At 4 dof the 5 percent two-sided critical value is 2.776; a t
        // right at the critical value must give p near 0.05.
        let diffs = [2.776, 2.776, 2.776, 2.776, 2.776];
        // Construct pairs whose differences have mean m and sd s such
        // that t = 2.776 exactly: use differences with mean 2.776 and
        // standard error 1.
        let spread: [f64; 5] = [2.0, -2.0, 1.0, -1.0, 0.0];
        let scale = (10.0f64 / 4.0).sqrt(); // sd of spread
        let a: Vec<f64> =
            diffs.iter().zip(&spread).map(|(d, s)| d + s * 5.0f64.sqrt() / scale).collect();
        let b = vec![0.0; 5];
        let result = paired_t_test(&a, &b).unwrap();
        assert!((result.t_statistic - 2.776).abs() < 1e-3, "t = {}", result.t_statistic);
        assert!((result.p_value - 0.05).abs() < 5e-4, "p = {}", result.p_value);
    }
}
