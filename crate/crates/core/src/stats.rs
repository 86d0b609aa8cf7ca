//! Binomial confidence intervals and the estimate report shared by every
//! Monte Carlo estimator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::std_normal_quantile;

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return domain("wilson interval needs at least one trial");
    }
    if successes > trials {
        return domain(format!("{successes} successes out of {trials} trials"));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return domain(format!("confidence {confidence} outside (0, 1)"));
    }
    let z = std_normal_quantile(1.0 - (1.0 - confidence) / 2.0)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Binomial standard error `√(p(1−p)/trials)`.
pub fn standard_error(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

/// One-sided domination test `p̂ ≤ bound + 3·SE`, with the standard error
/// taken under the null hypothesis `p = min(bound, 1)`. Bounds at or above 1
/// are trivially satisfied.
pub fn dominated(successes: u64, trials: u64, bound: f64) -> bool {
    if bound >= 1.0 {
        return true;
    }
    let p0 = bound.max(0.0);
    let estimate = successes as f64 / trials as f64;
    estimate <= p0 + 3.0 * standard_error(p0, trials)
}

/// Two-proportion agreement `|p̂₁ − p̂₂| ≤ k·SE` using the pooled standard
/// error.
pub fn agree_within(s1: u64, n1: u64, s2: u64, n2: u64, k: f64) -> bool {
    let p1 = s1 as f64 / n1 as f64;
    let p2 = s2 as f64 / n2 as f64;
    let pooled = (s1 + s2) as f64 / (n1 + n2) as f64;
    let se = (pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64)).sqrt();
    (p1 - p2).abs() <= k * se
}

/// The operational quantity an estimate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Average decoding error of a bare base code.
    BaseEpsilon,
    /// Average error probability of the authenticated code, no attack.
    Epsilon,
    /// Detector rejections among trials whose base decode was correct.
    FalseAlarm,
    /// Worst enumerated targeted false-authentication probability.
    AlphaStar,
    /// Worst enumerated false-authentication probability (any wrong message).
    Alpha,
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Metric::BaseEpsilon => "base_epsilon",
            Metric::Epsilon => "epsilon",
            Metric::FalseAlarm => "false_alarm",
            Metric::AlphaStar => "alpha_star",
            Metric::Alpha => "alpha",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Metric {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "base_epsilon" => Ok(Metric::BaseEpsilon),
            "epsilon" => Ok(Metric::Epsilon),
            "false_alarm" => Ok(Metric::FalseAlarm),
            "alpha_star" => Ok(Metric::AlphaStar),
            "alpha" => Ok(Metric::Alpha),
            other => domain(format!("unknown metric {other:?}")),
        }
    }
}

/// A Monte Carlo estimate with its Wilson 95% interval and, optionally, the
/// matching theoretical bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub metric: Metric,
    pub estimate: f64,
    pub successes: u64,
    pub trials: u64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominated: Option<bool>,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    /// `(transmitted, target)` pair attaining the maximum for `alpha_star`
    /// and `alpha` (these maxima are lower bounds on the true suprema).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_pair: Option<(usize, usize)>,
}

impl EstimateReport {
    pub fn from_counts(metric: Metric, successes: u64, trials: u64, seed: u64) -> Result<Self> {
        let (ci_lo, ci_hi) = wilson_interval(successes, trials, 0.95)?;
        Ok(Self {
            metric,
            estimate: successes as f64 / trials as f64,
            successes,
            trials,
            ci_lo,
            ci_hi,
            bound: None,
            dominated: None,
            seed,
            params: BTreeMap::new(),
            worst_pair: None,
        })
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.dominated = Some(dominated(self.successes, self.trials, bound));
        self
    }

    pub fn with_param(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn standard_error(&self) -> f64 {
        standard_error(self.estimate, self.trials)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn wilson_reference_values() {
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        assert_abs_diff_eq!(lo, 0.403_831_530_365_995_6, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, 0.596_168_469_634_004_4, epsilon = 1e-9);
        assert_eq!(wilson_interval(0, 37, 0.95).unwrap().0, 0.0);
        assert_eq!(wilson_interval(37, 37, 0.95).unwrap().1, 1.0);
        assert!(wilson_interval(5, 4, 0.95).is_err());
        assert!(wilson_interval(0, 0, 0.95).is_err());
        assert!(wilson_interval(1, 4, 1.0).is_err());
    }

    #[test]
    fn domination_uses_null_standard_error() {
        assert!(dominated(0, 100, 0.0));
        assert!(!dominated(1, 100, 0.0));
        assert!(dominated(100, 100, 1.5));
        // bound 0.1, n = 10_000: SE = 0.003, threshold 0.109
        assert!(dominated(1090, 10_000, 0.1));
        assert!(!dominated(1091, 10_000, 0.1));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [Metric::BaseEpsilon, Metric::Epsilon, Metric::FalseAlarm, Metric::AlphaStar, Metric::Alpha] {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
    }

    proptest! {
        #[test]
        fn interval_contains_estimate(trials in 1u64..5000, frac in 0.0f64..=1.0) {
            let s = (frac * trials as f64).floor() as u64;
            let (lo, hi) = wilson_interval(s, trials, 0.95).unwrap();
            let p = s as f64 / trials as f64;
            prop_assert!(lo <= p + 1e-15 && p <= hi + 1e-15);
            prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
        }
    }
}
