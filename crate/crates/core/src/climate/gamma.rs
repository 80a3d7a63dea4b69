//! Gamma calibration and normal-score transform for drought indices.
//!
//! Monthly 3-month aggregates are modelled as a mixture of a point mass at
//! zero and a gamma distribution on the positive part. The standardized index
//! is the standard-normal quantile of the mixture CDF.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{digamma, gamma_lr};

use super::ClimateError;

/// Month-wise gamma calibration of one climate variable for one cell.
///
/// `shift` is subtracted from raw values before the gamma transform; it is 0
/// for precipitation and soil water and `min - 1` for soil temperature, which
/// maps kelvin-scale data onto a positive support.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaStandardizer {
    pub shape: f64,
    pub scale: f64,
    /// Probability mass of exact-zero observations, in `[0, 1)`.
    pub zero_mass: f64,
    /// Offset subtracted from values before the gamma transform.
    pub shift: f64,
    /// Calendar month (1-12) this standardizer was calibrated for.
    pub calibration_month: u8,
    /// Inclusive year range of the calibration sample.
    pub reference_years: (i32, i32),
    /// True when the fit fell back to method-of-moments (degenerate or
    /// non-convergent sample); such standardizers are usable but flagged.
    pub mom_fallback: bool,
}

/// How raw values are shifted before gamma calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftPolicy {
    /// Use values as-is (precipitation, soil water).
    None,
    /// Subtract `min - 1` so all values are ≥ 1 (soil temperature).
    MinMinusOne,
}

/// Maximum-likelihood gamma fit on strictly positive values.
///
/// Solves `ln k − ψ(k) = ln(mean) − mean(ln x)` by Newton iteration from the
/// classical closed-form start; the scale is `mean / k`, which is the exact
/// first-order condition, so the fitted mean equals the sample mean.
pub fn fit_gamma_mle(values: &[f64]) -> Result<(f64, f64), ClimateError> {
    assert!(!values.is_empty(), "gamma MLE requires at least one value");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mean_ln = values.iter().map(|v| v.ln()).sum::<f64>() / n;
    let s = mean.ln() - mean_ln;
    if s <= 0.0 || s.is_nan() {
        // AM-GM gap is zero only for constant samples.
        return Err(ClimateError::DegenerateSample {
            message: "all positive values equal; gamma shape unbounded".to_string(),
        });
    }
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for _ in 0..100 {
        let f = k.ln() - digamma(k) - s;
        let fp = 1.0 / k - trigamma(k);
        let mut next = k - f / fp;
        if !next.is_finite() || next <= 0.0 {
            next = k / 2.0;
        }
        if (next - k).abs() <= 1e-12 * k {
            return Ok((next, mean / next));
        }
        k = next;
    }
    Err(ClimateError::NonConvergence { iterations: 100 })
}

/// Fits a standardizer for one calendar month from 3-month aggregates across
/// reference years.
///
/// Exact zeros contribute to `zero_mass`; positive values get a gamma MLE.
/// Fewer than 10 positive values, a constant positive sample, or Newton
/// non-convergence fall back to method-of-moments with a variance floor and
/// set `mom_fallback`. An all-zero sample has no positive mass to fit and is
/// an error.
pub fn fit_standardizer(
    values: &[f64],
    policy: ShiftPolicy,
    calibration_month: u8,
    reference_years: (i32, i32),
) -> Result<GammaStandardizer, ClimateError> {
    if values.is_empty() {
        return Err(ClimateError::DegenerateSample {
            message: format!("no calibration values for month {calibration_month}"),
        });
    }
    let shift = match policy {
        ShiftPolicy::None => 0.0,
        ShiftPolicy::MinMinusOne => values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0,
    };
    let mut positives = Vec::with_capacity(values.len());
    let mut zeros = 0usize;
    for &v in values {
        let x = v - shift;
        if x < 0.0 {
            return Err(ClimateError::OutOfRange {
                message: format!("negative aggregate {v} in month {calibration_month}"),
            });
        }
        if x == 0.0 {
            zeros += 1;
        } else {
            positives.push(x);
        }
    }
    if positives.is_empty() {
        return Err(ClimateError::DegenerateSample {
            message: format!("month {calibration_month}: all values are zero"),
        });
    }
    let zero_mass = zeros as f64 / values.len() as f64;
    let tail = |fit: (f64, f64), fallback: bool| GammaStandardizer {
        shape: fit.0,
        scale: fit.1,
        zero_mass,
        shift,
        calibration_month,
        reference_years,
        mom_fallback: fallback,
    };
    let degenerate = positives.len() < 10;
    if !degenerate {
        match fit_gamma_mle(&positives) {
            Ok(fit) => return Ok(tail(fit, false)),
            Err(ClimateError::DegenerateSample { .. }) | Err(ClimateError::NonConvergence { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(tail(moments_fit(&positives), true))
}

/// Method-of-moments gamma fit with a variance floor of (5% of mean)²,
/// which keeps the shape bounded on near-constant samples.
fn moments_fit(positives: &[f64]) -> (f64, f64) {
    let n = positives.len() as f64;
    let mean = positives.iter().sum::<f64>() / n;
    let var = positives.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let var = var.max((0.05 * mean).powi(2));
    let shape = mean * mean / var;
    let scale = var / mean;
    (shape, scale)
}

/// Maps a raw 3-month aggregate to its standardized index.
///
/// The composite CDF is `zero_mass + (1 − zero_mass)·GammaCDF(value − shift)`;
/// exact zeros take the midpoint of the zero mass. The normal quantile is
/// clamped to `[-5, 5]`, which absorbs tail overflow from values far outside
/// the calibration range.
pub fn standardize(value: f64, std: &GammaStandardizer) -> f64 {
    let x = (value - std.shift).max(0.0);
    let p = if x == 0.0 {
        std.zero_mass / 2.0
    } else {
        std.zero_mass + (1.0 - std.zero_mass) * gamma_lr(std.shape, x / std.scale)
    };
    if p <= 0.0 {
        return -5.0;
    }
    if p >= 1.0 {
        return 5.0;
    }
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    normal.inverse_cdf(p).clamp(-5.0, 5.0)
}

/// Trigamma ψ′(x) by recurrence into the asymptotic regime plus the standard
/// Bernoulli-number expansion.
pub fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma defined here for positive arguments");
    let mut acc = 0.0;
    let mut z = x;
    while z < 10.0 {
        acc += 1.0 / (z * z);
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + 0.5 * inv
            + inv2
                * (1.0 / 6.0
                    - inv2
                        * (1.0 / 30.0
                            - inv2
                                * (1.0 / 42.0
                                    - inv2
                                        * (1.0 / 30.0
                                            - inv2 * (5.0 / 66.0 - inv2 * (691.0 / 2730.0)))))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trigamma_matches_reference_points() {
        // ψ′(1) = π²/6, ψ′(1/2) = π²/2, ψ′(3) = π²/6 − 5/4.
        assert_relative_eq!(trigamma(1.0), 1.6449340668482264, max_relative = 1e-12);
        assert_relative_eq!(trigamma(0.5), 4.934802200544679, max_relative = 1e-12);
        assert_relative_eq!(trigamma(3.0), 0.39493406684822645, max_relative = 1e-12);
    }

    #[test]
    fn gamma_mle_matches_independent_oracle() {
        // Profile-likelihood grid/root search on {1,2,3,4,5}.
        let (shape, scale) = fit_gamma_mle(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_relative_eq!(shape, 3.7016438100, max_relative = 1e-6);
        assert_relative_eq!(scale, 0.8104507494, max_relative = 1e-6);
        // First-order condition: fitted mean equals sample mean.
        assert_relative_eq!(shape * scale, 3.0, max_relative = 1e-12);
    }

    #[test]
    fn gamma_mle_rejects_constant_sample() {
        assert!(matches!(
            fit_gamma_mle(&[2.0, 2.0, 2.0]),
            Err(ClimateError::DegenerateSample { .. })
        ));
    }

    #[test]
    fn standardizer_counts_zero_mass() {
        let mut values = vec![0.0; 5];
        values.extend((1..=20).map(|i| i as f64));
        let s = fit_standardizer(&values, ShiftPolicy::None, 7, (1981, 2020)).unwrap();
        assert_relative_eq!(s.zero_mass, 0.2, max_relative = 1e-15);
        assert!(!s.mom_fallback);
        // Fitted mean of the positive part matches the positive-sample mean.
        assert_relative_eq!(s.shape * s.scale, 10.5, max_relative = 1e-9);
    }

    #[test]
    fn standardizer_rejects_all_zero_sample() {
        let values = vec![0.0; 30];
        assert!(matches!(
            fit_standardizer(&values, ShiftPolicy::None, 1, (1981, 2020)),
            Err(ClimateError::DegenerateSample { .. })
        ));
    }

    #[test]
    fn standardizer_flags_small_samples() {
        let values = vec![1.0, 2.0, 3.0];
        let s = fit_standardizer(&values, ShiftPolicy::None, 2, (1981, 2020)).unwrap();
        assert!(s.mom_fallback);
        assert!(s.shape > 0.0 && s.scale > 0.0);
    }

    #[test]
    fn standardizer_flags_constant_positive_samples() {
        let values = vec![4.0; 20];
        let s = fit_standardizer(&values, ShiftPolicy::None, 3, (1981, 2020)).unwrap();
        assert!(s.mom_fallback);
        // Variance floor keeps the shape finite.
        assert!(s.shape.is_finite() && s.shape > 0.0);
    }

    #[test]
    fn shift_policy_makes_temperatures_positive() {
        let values: Vec<f64> = (0..40).map(|i| 270.0 + (i % 7) as f64).collect();
        let s = fit_standardizer(&values, ShiftPolicy::MinMinusOne, 8, (1981, 2020)).unwrap();
        assert_relative_eq!(s.shift, 269.0, max_relative = 1e-15);
        assert_eq!(s.zero_mass, 0.0);
        assert!(!s.mom_fallback);
    }

    fn plain(shape: f64, scale: f64, zero_mass: f64) -> GammaStandardizer {
        GammaStandardizer {
            shape,
            scale,
            zero_mass,
            shift: 0.0,
            calibration_month: 1,
            reference_years: (1981, 2020),
            mom_fallback: false,
        }
    }

    #[test]
    fn standardize_maps_median_to_zero() {
        // Median of Gamma(shape=2, scale=3).
        let s = plain(2.0, 3.0, 0.0);
        assert!(standardize(5.0350409700, &s).abs() < 1e-6);
    }

    #[test]
    fn standardize_maps_quantile_0975() {
        // 0.975 quantile of Gamma(shape=2, scale=3).
        let s = plain(2.0, 3.0, 0.0);
        assert_relative_eq!(standardize(16.7149301728, &s), 1.959964, epsilon = 1e-4);
    }

    #[test]
    fn standardize_zero_uses_half_zero_mass() {
        let s = plain(2.0, 3.0, 0.2);
        // Φ⁻¹(0.1)
        assert_relative_eq!(standardize(0.0, &s), -1.2815515655446004, epsilon = 1e-9);
    }

    #[test]
    fn standardize_clamps_tails() {
        let s = plain(2.0, 3.0, 0.0);
        assert_eq!(standardize(0.0, &s), -5.0);
        assert_eq!(standardize(1e9, &s), 5.0);
    }

    #[test]
    fn standardize_is_monotone() {
        let s = plain(1.7, 2.2, 0.15);
        let grid: Vec<f64> = (0..1000).map(|i| i as f64 * 0.05).collect();
        for w in grid.windows(2) {
            assert!(standardize(w[0], &s) <= standardize(w[1], &s));
        }
    }
}
