//! Scalar information measures and concentration bounds.
//!
//! All logarithms are natural; entropies and divergences are in nats.
//! `0 · ln 0` is taken to be `0` everywhere.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{domain, Result};

/// A probability, or a probability bound, in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            domain(format!("probability {value} outside [0, 1]"))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// An information quantity in nats.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nats(pub f64);

impl Nats {
    pub fn value(self) -> f64 {
        self.0
    }
}

fn xlogx_over(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (x / y).ln()
    }
}

pub(crate) fn h2_raw(a: f64) -> f64 {
    if a <= 0.0 || a >= 1.0 {
        0.0
    } else {
        -a * a.ln() - (1.0 - a) * (1.0 - a).ln()
    }
}

pub(crate) fn d2_raw(a: f64, b: f64) -> f64 {
    xlogx_over(a, b) + xlogx_over(1.0 - a, 1.0 - b)
}

pub(crate) fn i2_raw(a: f64, b: f64) -> f64 {
    let r = b * (1.0 - a) / (1.0 - b);
    h2_raw(b) - b * h2_raw(a) - (1.0 - b) * h2_raw(r)
}

/// Binary entropy `H2(a)`.
pub fn h2(a: f64) -> Result<Nats> {
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("h2 argument {a} outside [0, 1]"));
    }
    Ok(Nats(h2_raw(a)))
}

/// Binary divergence `D2(a || b)`.
pub fn d2(a: f64, b: f64) -> Result<Nats> {
    if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
        return domain(format!("d2 arguments ({a}, {b}) outside [0, 1]"));
    }
    if b == 0.0 || b == 1.0 {
        return if a == b {
            Ok(Nats(0.0))
        } else {
            domain(format!("d2({a} || {b}) is infinite"))
        };
    }
    Ok(Nats(d2_raw(a, b).max(0.0)))
}

fn check_i2(a: f64, b: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) || !(b > 0.0 && b < 1.0) {
        return domain(format!("i2 arguments ({a}, {b}) need a in [0,1], b in (0,1)"));
    }
    let r = b * (1.0 - a) / (1.0 - b);
    if r > 1.0 {
        return domain(format!("i2({a} || {b}): b(1-a)/(1-b) = {r} exceeds 1"));
    }
    Ok(())
}

/// The overlap information `I2(a || b)`, evaluated through the entropy form
/// `H2(b) − b H2(a) − (1−b) H2(b(1−a)/(1−b))`.
pub fn i2(a: f64, b: f64) -> Result<Nats> {
    check_i2(a, b)?;
    Ok(Nats(i2_raw(a, b)))
}

/// `I2(a || b)` through the divergence form
/// `b D2(a || b) + (1−b) D2(b(1−a)/(1−b) || b)`.
pub fn i2_divergence_form(a: f64, b: f64) -> Result<Nats> {
    check_i2(a, b)?;
    let r = b * (1.0 - a) / (1.0 - b);
    Ok(Nats(b * d2_raw(a, b) + (1.0 - b) * d2_raw(r, b)))
}

/// Upper bound on either tail `Pr(Σ G²_ρ ≷ n(1 ± c)ρ)` of a scaled
/// chi-square sum with `n` terms. Independent of `ρ`.
pub fn chi_square_tail_bound(n: usize, c: f64) -> Result<Probability> {
    if n == 0 {
        return domain("chi-square tail bound needs n >= 1");
    }
    if !(c >= 0.0) {
        return domain(format!("deviation c = {c} must be non-negative"));
    }
    let n = n as f64;
    let exponent = if c <= 1.0 { c * c * n / 8.0 } else { c * n / 8.0 };
    Probability::new((-exponent).exp())
}

/// Posterior of `X ~ N(0, rho)` given `X + N(0, a) = z`: returns
/// `(mean, variance) = (ρz/(ρ+a), ρa/(ρ+a))`.
pub fn gaussian_posterior(rho: f64, a: f64, z: f64) -> Result<(f64, f64)> {
    if !(rho > 0.0) || !(a > 0.0) {
        return domain(format!("posterior variances must be positive, got ({rho}, {a})"));
    }
    Ok((rho / (rho + a) * z, rho * a / (rho + a)))
}

/// Probability slack `c⁻¹ √(Σ 1/(2ρ_i))` paid when a continuous mean vector
/// is replaced by its nearest point on a grid of spacing `1/c`.
pub fn quantization_slack(n: usize, variances: &[f64], c: f64) -> Result<f64> {
    if variances.len() != n {
        return domain(format!("expected {n} variances, got {}", variances.len()));
    }
    if !(c > 0.0) {
        return domain(format!("grid density c = {c} must be positive"));
    }
    if let Some(v) = variances.iter().find(|v| !(**v > 0.0)) {
        return domain(format!("variance {v} must be positive"));
    }
    let s: f64 = variances.iter().map(|v| 1.0 / (2.0 * v)).sum();
    Ok(s.sqrt() / c)
}

/// Standard normal CDF `Φ(x) = ½ erfc(−x/√2)`.
///
/// Uses the `libm` (musl) complementary error function, accurate to about
/// one ulp, so the absolute error is far below `1e-12`.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile `Φ⁻¹(p)`.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("quantile level {p} outside (0, 1)"));
    }
    Ok(Normal::new(0.0, 1.0)
        .expect("unit normal")
        .inverse_cdf(p))
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        f64::NEG_INFINITY
    } else {
        statrs::function::factorial::ln_binomial(n, k)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn binary_entropy_values() {
        assert_eq!(h2(0.0).unwrap().value(), 0.0);
        assert_eq!(h2(1.0).unwrap().value(), 0.0);
        assert_relative_eq!(h2(0.5).unwrap().value(), std::f64::consts::LN_2, epsilon = 1e-15);
        // -0.75 ln 0.75 - 0.25 ln 0.25
        assert_relative_eq!(h2(0.75).unwrap().value(), 0.562_335_144_618_808_3, epsilon = 1e-12);
        assert!(h2(-0.1).is_err());
        assert!(h2(1.1).is_err());
    }

    #[test]
    fn binary_divergence_values() {
        assert_eq!(d2(0.3, 0.3).unwrap().value(), 0.0);
        assert_relative_eq!(d2(0.9, 0.5).unwrap().value(), 0.368_064_207_168_497_1, epsilon = 1e-12);
        assert_relative_eq!(d2(1.0, 0.5).unwrap().value(), std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(d2(0.5, 0.0).is_err());
        assert!(d2(0.5, 1.0).is_err());
        assert_eq!(d2(1.0, 1.0).unwrap().value(), 0.0);
    }

    #[test]
    fn overlap_information_values() {
        for a in [0.1, 0.3, 0.5, 0.9] {
            assert!(i2(a, a).unwrap().value().abs() < 1e-15);
        }
        assert_relative_eq!(i2(0.75, 0.5).unwrap().value(), 0.130_812_035_941_137, epsilon = 1e-12);
        assert_relative_eq!(
            i2_divergence_form(0.75, 0.5).unwrap().value(),
            0.130_812_035_941_137,
            epsilon = 1e-12
        );
        assert_relative_eq!(i2(2.0 / 3.0, 1.0 / 3.0).unwrap().value(), 0.123_968_639_619_005_4, epsilon = 1e-12);
        // b(1-a)/(1-b) = 0.8 * 0.9 / 0.2 > 1
        assert!(i2(0.1, 0.8).is_err());
    }

    #[test]
    fn overlap_information_forms_agree_on_grid() {
        for i in 1..=100 {
            for j in 1..=100 {
                let a = i as f64 / 101.0;
                let b = j as f64 / 101.0;
                if b * (1.0 - a) / (1.0 - b) > 1.0 {
                    continue;
                }
                let e = i2(a, b).unwrap().value();
                let d = i2_divergence_form(a, b).unwrap().value();
                let scale = e.abs().max(d.abs());
                assert!(
                    (e - d).abs() <= 1e-12 * scale.max(1e-3),
                    "a={a} b={b}: {e} vs {d}"
                );
                assert!(e >= -1e-15);
            }
        }
    }

    #[test]
    fn chi_square_bound_values() {
        assert_relative_eq!(chi_square_tail_bound(8, 1.0).unwrap().value(), (-1.0f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(chi_square_tail_bound(8, 2.0).unwrap().value(), (-2.0f64).exp(), epsilon = 1e-15);
        assert_eq!(chi_square_tail_bound(17, 0.0).unwrap().value(), 1.0);
        assert!(chi_square_tail_bound(0, 1.0).is_err());
        assert!(chi_square_tail_bound(4, -1.0).is_err());
    }

    #[test]
    fn posterior_values() {
        assert_eq!(gaussian_posterior(1.0, 1.0, 2.0).unwrap(), (1.0, 0.5));
        let (m, v) = gaussian_posterior(3.0, 0.5, 0.0).unwrap();
        assert_eq!(m, 0.0);
        assert_relative_eq!(v, 1.5 / 3.5, epsilon = 1e-15);
        assert!(gaussian_posterior(0.0, 1.0, 1.0).is_err());
        assert!(gaussian_posterior(1.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn slack_values() {
        assert_relative_eq!(quantization_slack(1, &[0.5], 1.0).unwrap(), 1.0, epsilon = 1e-15);
        assert_relative_eq!(
            quantization_slack(2, &[0.5, 0.5], 2.0).unwrap(),
            0.5 * std::f64::consts::SQRT_2,
            epsilon = 1e-15
        );
        let mut last = f64::INFINITY;
        for c in [0.5, 1.0, 10.0, 1e3, 1e9] {
            let s = quantization_slack(3, &[0.2, 1.0, 4.0], c).unwrap();
            assert!(s < last);
            last = s;
        }
        assert!(last < 1e-8);
        assert!(quantization_slack(1, &[0.0], 1.0).is_err());
        assert!(quantization_slack(2, &[1.0], 1.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_relative_eq!(std_normal_cdf(0.0), 0.5, epsilon = 1e-15);
        // Φ(-4) = 3.167124183311992e-5
        assert_relative_eq!(std_normal_cdf(-4.0), 3.167_124_183_311_992e-5, max_relative = 1e-13);
        assert_relative_eq!(std_normal_cdf(1.959_963_984_540_054), 0.975, epsilon = 1e-13);
        assert_relative_eq!(std_normal_quantile(0.975).unwrap(), 1.959_963_984_540_054, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn measures_are_non_negative(a in 0.0f64..=1.0, b in 0.001f64..0.999) {
            prop_assert!(h2(a).unwrap().value() >= 0.0);
            prop_assert!(d2(a, b).unwrap().value() >= 0.0);
            if b * (1.0 - a) / (1.0 - b) <= 1.0 {
                prop_assert!(i2(a, b).unwrap().value() >= -1e-14);
            }
        }

        #[test]
        fn posterior_variance_below_both_priors(rho in 1e-3f64..1e3, a in 1e-3f64..1e3, z in -10.0f64..10.0) {
            let (_, v) = gaussian_posterior(rho, a, z).unwrap();
            prop_assert!(v < rho.min(a));
        }
    }
}
