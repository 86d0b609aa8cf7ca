//! The two code modifications that retrofit authentication onto a base
//! code: message-dependent noise injection with a per-level variance
//! detector, and uniform decimation of the message set.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basecode::BaseCode;
use crate::bounds::{injection_power_bound, lambda_value, r_ddagger, theta, RDaggerTerms};
use crate::error::{domain, Error, Result};
use crate::overlay::OverlayCode;
use crate::rng::{stream, StreamRole};

/// How the per-message offsets `t(m)` are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetMode {
    /// `t_i(m) ~ N(0, (1 − f_i²(m)) ρ_Δ)`, independently per message and coordinate.
    #[default]
    Random,
    /// `t = 0`; only the injected noise remains.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionOptions {
    pub offsets: OffsetMode,
    /// Redraw the offsets until every message meets the power bound and the
    /// cross-correlation bound `Σ 2 t_i x_i ≤ 2n√(2ω_H(r_H+1)ρ_Δ)`.
    pub enforce_checks: bool,
    pub max_resamples: usize,
}

impl Default for InjectionOptions {
    fn default() -> Self {
        Self {
            offsets: OffsetMode::Random,
            enforce_checks: true,
            max_resamples: 64,
        }
    }
}

/// Decision of the authenticating decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Message(usize),
    Reject,
}

impl Decision {
    pub fn message(self) -> Option<usize> {
        match self {
            Decision::Message(m) => Some(m),
            Decision::Reject => None,
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Decision::Message(m) => write!(f, "{m}"),
            Decision::Reject => f.write_str("!"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorOutcome {
    pub decoded: Decision,
    /// Output of the base decoder before any test.
    pub base_decoded: usize,
    /// One normalized residual energy per level of `K`.
    pub statistics: Vec<f64>,
    pub threshold: f64,
    /// The base decision fell outside the decimated message set.
    pub outside_decimated_set: bool,
}

/// Bookkeeping for a decimated code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decimation {
    /// Sorted surviving message ids.
    pub ids: Vec<usize>,
    pub lambda: f64,
    pub theta: f64,
    pub rate: RDaggerTerms,
    /// Whether `(n−1)r_H ≥ (1−γ)ℓλ²/4 + 2 + ln 4nθ` holds.
    pub precondition_met: bool,
}

/// How the decimation margin `λ` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    /// `λ` computed from the actual channel variances.
    Exact,
    /// `λ = 0`: decimates at least as much as any adversary requires, so no
    /// knowledge of `ρ_Adv` is needed.
    AdversaryAgnostic,
}

/// A base code wrapped with noise injection, a detector and optional
/// decimation.
#[derive(Debug, Clone, PartialEq)]
pub struct AuthCode {
    base: BaseCode,
    overlay: OverlayCode,
    t_table: Option<Vec<Vec<f64>>>,
    rho_delta: f64,
    delta: f64,
    threshold: f64,
    decimation: Option<Decimation>,
    resamples: usize,
}

fn sample_offsets(overlay: &OverlayCode, rows: usize, rho_delta: f64, seed: u64, attempt: u64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, attempt, StreamRole::TTable);
    (0..rows)
        .map(|m| {
            (0..overlay.n())
                .map(|i| {
                    let f = overlay.level(m, i);
                    let var = (1.0 - f * f) * rho_delta;
                    if var > 0.0 {
                        var.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect()
}

/// Noise injection: `X′(m) = x(m) + t(m) + f(m)·G_Δ`, with the per-level
/// detector thresholds `ℓ(1+δ)`.
///
/// The overlay must have one row per decoder output of `base`, including
/// the silent message when it is enabled.
pub fn apply_noise_injection(
    base: &BaseCode,
    overlay: &OverlayCode,
    rho_delta: f64,
    delta: f64,
    options: &InjectionOptions,
    seed: u64,
) -> Result<AuthCode> {
    if overlay.n() != base.n() {
        return Err(Error::Mismatch(format!(
            "overlay block length {} differs from base block length {}",
            overlay.n(),
            base.n()
        )));
    }
    if overlay.message_count() != base.decoder_alphabet() {
        return Err(Error::Mismatch(format!(
            "overlay has {} messages, base code has {}",
            overlay.message_count(),
            base.decoder_alphabet()
        )));
    }
    if !(rho_delta > 0.0 && rho_delta.is_finite()) {
        return domain(format!("injection power {rho_delta} must be positive"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta {delta} outside (0, 1)"));
    }
    let mut code = AuthCode {
        base: base.clone(),
        overlay: overlay.clone(),
        t_table: None,
        rho_delta,
        delta,
        threshold: overlay.ell() as f64 * (1.0 + delta),
        decimation: None,
        resamples: 0,
    };
    if options.offsets == OffsetMode::Zero {
        return Ok(code);
    }
    let attempts = if options.enforce_checks { options.max_resamples.max(1) } else { 1 };
    for attempt in 0..attempts {
        code.t_table = Some(sample_offsets(overlay, base.decoder_alphabet(), rho_delta, seed, attempt as u64));
        code.resamples = attempt;
        if !options.enforce_checks || code.offsets_within_bounds() {
            return Ok(code);
        }
    }
    Err(Error::RetryLimit { attempts })
}

impl AuthCode {
    pub fn base(&self) -> &BaseCode {
        &self.base
    }

    pub fn overlay(&self) -> &OverlayCode {
        &self.overlay
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn rho_delta(&self) -> f64 {
        self.rho_delta
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn decimation(&self) -> Option<&Decimation> {
        self.decimation.as_ref()
    }

    pub fn offset_mode(&self) -> OffsetMode {
        if self.t_table.is_some() {
            OffsetMode::Random
        } else {
            OffsetMode::Zero
        }
    }

    /// Number of offset redraws needed to pass the checks.
    pub fn resamples(&self) -> usize {
        self.resamples
    }

    pub fn silence(&self) -> Option<usize> {
        self.base.silence()
    }

    /// Messages the encoder may send: the decimated set when present.
    pub fn messages(&self) -> Vec<usize> {
        match &self.decimation {
            Some(d) => d.ids.clone(),
            None => (0..self.base.message_count()).collect(),
        }
    }

    /// `r_J`: the base rate, or `(1/n) ln|M‡|` after decimation.
    pub fn rate(&self) -> f64 {
        match &self.decimation {
            Some(d) => (d.ids.len() as f64).ln() / self.n() as f64,
            None => self.base.rate(),
        }
    }

    /// `t_i(m)`, zero in the offset-free mode.
    pub fn offset(&self, m: usize, i: usize) -> f64 {
        self.t_table.as_ref().map_or(0.0, |t| t[m][i])
    }

    pub fn offsets(&self, m: usize) -> Option<&[f64]> {
        self.t_table.as_ref().map(|t| t[m].as_slice())
    }

    /// `x(m) + t(m)`, the mean of the transmitted vector.
    pub fn mean_codeword(&self, m: usize) -> Vec<f64> {
        let x = self.base.codeword(m);
        match &self.t_table {
            Some(t) => x.iter().zip(&t[m]).map(|(a, b)| a + b).collect(),
            None => x.to_vec(),
        }
    }

    /// Expected per-symbol power of `X′(m)`:
    /// `(1/n) Σ [(x_i + t_i)² + f_i² ρ_Δ]`.
    pub fn expected_power(&self, m: usize) -> f64 {
        let mean = self.mean_codeword(m);
        let inj: f64 = (0..self.n()).map(|i| self.overlay.level(m, i).powi(2)).sum::<f64>() * self.rho_delta;
        (mean.iter().map(|v| v * v).sum::<f64>() + inj) / self.n() as f64
    }

    /// `max_m` of [`expected_power`](Self::expected_power) over the
    /// messages the encoder may send.
    pub fn max_expected_power(&self) -> f64 {
        self.messages()
            .into_iter()
            .map(|m| self.expected_power(m))
            .fold(0.0, f64::max)
    }

    fn offsets_within_bounds(&self) -> bool {
        let n = self.n();
        let omega = self.base.power();
        let r = self.base.rate();
        let power_cap = injection_power_bound(omega, r, self.rho_delta, self.overlay.level_set().len(), n, false);
        let corr_cap = n as f64 * 2.0 * (2.0 * omega * (r + 1.0) * self.rho_delta).sqrt();
        (0..self.base.message_count()).all(|m| {
            let corr: f64 = 2.0
                * self
                    .base
                    .codeword(m)
                    .iter()
                    .zip(self.offsets(m).unwrap_or(&[]))
                    .map(|(x, t)| x * t)
                    .sum::<f64>();
            corr <= corr_cap && self.expected_power(m) <= power_cap
        })
    }

    /// Draws `X′(m) = x(m) + t(m) + f(m)·G_Δ` using `rng` for `G_Δ`.
    pub fn encode<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Vec<f64>> {
        if m >= self.base.decoder_alphabet() {
            return Err(Error::UnknownMessage(m));
        }
        let sd = self.rho_delta.sqrt();
        let mut out = self.mean_codeword(m);
        for (i, v) in out.iter_mut().enumerate() {
            let f = self.overlay.level(m, i);
            if f > 0.0 {
                *v += f * sd * rng.sample::<f64, _>(rand_distr::StandardNormal);
            }
        }
        Ok(out)
    }

    /// Base decoding followed by one variance test per level of `K` on the
    /// decoded message's test sets; level 1 is never tested.
    pub fn decode_detect(&self, y: &[f64], rho_dec: f64) -> DetectorOutcome {
        let m = self.base.decode(y);
        let x = self.base.codeword(m);
        let statistics: Vec<f64> = (0..self.overlay.level_set().len())
            .map(|k| {
                let level = self.overlay.level_set().value(k);
                let denom = level * level * self.rho_delta + rho_dec;
                let energy: f64 = self
                    .overlay
                    .test_set(m, k)
                    .iter()
                    .map(|&i| (y[i] - self.offset(m, i) - x[i]).powi(2))
                    .sum();
                if denom > 0.0 {
                    energy / denom
                } else if energy == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .collect();
        let passes = statistics.iter().all(|s| *s <= self.threshold);
        let outside = match &self.decimation {
            Some(d) => Some(m) != self.silence() && d.ids.binary_search(&m).is_err(),
            None => false,
        };
        DetectorOutcome {
            decoded: if passes && !outside { Decision::Message(m) } else { Decision::Reject },
            base_decoded: m,
            statistics,
            threshold: self.threshold,
            outside_decimated_set: outside,
        }
    }

    /// Same code with the variance tests switched off (threshold `+∞`).
    pub fn with_detector_disabled(&self) -> Self {
        let mut out = self.clone();
        out.threshold = f64::INFINITY;
        out
    }

    /// JSON description referring to the base code and overlay by name.
    pub fn to_json(&self, base_ref: &str, overlay_ref: &str) -> serde_json::Value {
        let mut v = serde_json::json!({
            "base_ref": base_ref,
            "overlay_ref": overlay_ref,
            "rho_delta": self.rho_delta,
            "delta": self.delta,
            "decimated_ids": self.decimation.as_ref().map(|d| d.ids.clone()),
        });
        if let Some(t) = &self.t_table {
            v["t_table"] = serde_json::json!(t);
        }
        v
    }
}

/// Uniformly random `size`-subset of `0..universe` by partial Fisher–Yates
/// shuffle, returned sorted.
pub fn sample_uniform_subset<R: Rng + ?Sized>(universe: usize, size: usize, rng: &mut R) -> Result<Vec<usize>> {
    if size > universe {
        return domain(format!("cannot pick {size} of {universe} elements"));
    }
    let mut ids: Vec<usize> = (0..universe).collect();
    let (chosen, _) = ids.partial_shuffle(rng, size);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Decimation: keeps a uniformly random subset of `⌊exp(n r‡)⌋` messages.
/// The silent message, when present, is never removed.
pub fn apply_decimation(code: &AuthCode, rho_adv: f64, rho_dec: f64, mode: LambdaMode, seed: u64) -> Result<AuthCode> {
    let overlay = &code.overlay;
    let n = code.n();
    let lambda = match mode {
        LambdaMode::Exact => {
            lambda_value(overlay.level_set(), overlay.gamma(), code.delta, code.rho_delta, rho_adv, rho_dec)?.lambda
        }
        LambdaMode::AdversaryAgnostic => 0.0,
    };
    let r_h = code.base.rate();
    let th = theta(n, code.base.power(), code.rho_delta, rho_dec, code.delta, lambda, r_h);
    let terms = r_ddagger(n, r_h, overlay.gamma(), overlay.ell(), lambda, th);
    if terms.value <= 0.0 {
        return Err(Error::Infeasible(format!("decimated rate is not positive: {terms}")));
    }
    let target = (n as f64 * terms.value).exp().floor();
    if target < 2.0 {
        return Err(Error::Infeasible(format!(
            "decimated set would keep {target} < 2 messages: {terms}"
        )));
    }
    let size = (target as usize).min(code.base.message_count());
    let mut rng = stream(seed, 0, StreamRole::Decimation);
    let ids = sample_uniform_subset(code.base.message_count(), size, &mut rng)?;
    let ell = overlay.ell() as f64;
    let precondition_met = (n as f64 - 1.0) * r_h
        >= (1.0 - overlay.gamma()) * ell * lambda * lambda / 4.0 + 2.0 + (4.0 * n as f64 * th).ln();
    let mut out = code.clone();
    out.decimation = Some(Decimation {
        ids,
        lambda,
        theta: th,
        rate: terms,
        precondition_met,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basecode::{make_antipodal_code, make_random_gaussian_code};
    use crate::overlay::{construct_overlay, ConstructOptions, LevelSet, RateChoice};

    fn overlay(n: usize, levels: Vec<f64>, count: usize, seed: u64) -> OverlayCode {
        let ls = LevelSet::new(levels).unwrap();
        let mut counts = vec![1; ls.len()];
        counts[0] = count;
        construct_overlay(
            n,
            &ls,
            0.75,
            &ConstructOptions {
                rates: RateChoice::Counts(counts),
                ..Default::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn full_level_offsets_are_zero_and_deterministic() {
        let base = make_random_gaussian_code(60, 4, 1.0, 1).unwrap();
        let ov = overlay(60, vec![0.0, 0.5], 4, 2);
        let code = apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 7).unwrap();
        for m in 0..4 {
            for i in 0..60 {
                if ov.level(m, i) == 1.0 {
                    assert_eq!(code.offset(m, i), 0.0);
                } else {
                    assert_ne!(code.offset(m, i), 0.0);
                }
            }
        }
        assert_eq!(code, apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 7).unwrap());
        assert_ne!(code, apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 8).unwrap());
    }

    #[test]
    fn mismatches_are_rejected() {
        let base = make_antipodal_code(60, 1.0).unwrap();
        let ov = overlay(60, vec![0.0], 3, 2);
        assert!(matches!(apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 0), Err(Error::Mismatch(_))));
        let ov2 = overlay(64, vec![0.0], 2, 2);
        assert!(matches!(apply_noise_injection(&base, &ov2, 0.5, 0.2, &InjectionOptions::default(), 0), Err(Error::Mismatch(_))));
        let ok = overlay(60, vec![0.0], 2, 2);
        assert!(apply_noise_injection(&base, &ok, 0.0, 0.2, &InjectionOptions::default(), 0).is_err());
        assert!(apply_noise_injection(&base, &ok, 1.0, 1.0, &InjectionOptions::default(), 0).is_err());
    }

    #[test]
    fn zero_noise_observation_is_accepted() {
        let base = make_random_gaussian_code(48, 4, 1.0, 3).unwrap();
        let ov = overlay(48, vec![0.0, 0.5], 4, 5);
        let code = apply_noise_injection(&base, &ov, 0.3, 0.2, &InjectionOptions::default(), 1).unwrap();
        for m in 0..4 {
            let out = code.decode_detect(&code.mean_codeword(m), 0.1);
            assert_eq!(out.decoded, Decision::Message(m));
            assert!(out.statistics.iter().all(|s| *s < 1e-20));
        }
    }

    #[test]
    fn rejection_is_monotone_in_residual_scale() {
        let base = make_antipodal_code(200, 4.0).unwrap();
        let ov = overlay(200, vec![0.0, 0.5], 2, 5);
        let code = apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 1).unwrap();
        let mut rng = stream(4, 0, StreamRole::Decoder);
        for _ in 0..50 {
            let mean = code.mean_codeword(0);
            let noise: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal) * 0.4).collect();
            let mut last_rejected = false;
            for s in [0.5, 1.0, 1.5, 2.0, 3.0] {
                let y: Vec<f64> = mean.iter().zip(&noise).map(|(a, b)| a + s * b).collect();
                let out = code.decode_detect(&y, 0.1);
                assert_eq!(out.base_decoded, 0);
                let rejected = out.decoded == Decision::Reject;
                assert!(rejected || !last_rejected);
                last_rejected = rejected;
            }
        }
    }

    #[test]
    fn zero_offset_mode_and_disabled_detector() {
        let base = make_antipodal_code(40, 1.0).unwrap();
        let ov = overlay(40, vec![0.0], 2, 1);
        let opts = InjectionOptions {
            offsets: OffsetMode::Zero,
            ..Default::default()
        };
        let code = apply_noise_injection(&base, &ov, 0.5, 0.2, &opts, 1).unwrap();
        assert!(code.offsets(0).is_none());
        assert!(code.to_json("b", "o").get("t_table").is_none());
        assert!(code.max_expected_power() <= 1.0 + 0.5);
        let y = vec![5.0; 40];
        assert_eq!(code.decode_detect(&y, 0.1).decoded, Decision::Reject);
        assert_eq!(code.with_detector_disabled().decode_detect(&y, 0.1).decoded, Decision::Message(0));
    }

    #[test]
    fn power_within_bound_when_checks_enforced() {
        let base = make_random_gaussian_code(64, 8, 1.0, 4).unwrap();
        let ov = overlay(64, vec![0.0, 0.5], 8, 5);
        let code = apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 1).unwrap();
        let cap = injection_power_bound(1.0, base.rate(), 0.5, 2, 64, false);
        assert!(code.max_expected_power() <= cap);
    }

    #[test]
    fn decimation_keeps_floor_of_exp_rate() {
        let base = make_random_gaussian_code(64, 1024, 1.0, 4).unwrap();
        let ls = LevelSet::new(vec![0.0]).unwrap();
        let ov = construct_overlay(
            64,
            &ls,
            0.75,
            &ConstructOptions {
                rates: RateChoice::Counts(vec![1024]),
                ..Default::default()
            },
            9,
        )
        .unwrap();
        let code = apply_noise_injection(&base, &ov, 0.05, 0.2, &InjectionOptions::default(), 1).unwrap();
        let dec = apply_decimation(&code, 0.1, 0.1, LambdaMode::AdversaryAgnostic, 3).unwrap();
        let d = dec.decimation().unwrap();
        assert_eq!(d.ids.len() as f64, (64.0 * d.rate.value).exp().floor());
        assert!(d.ids.windows(2).all(|w| w[0] < w[1]));
        assert!((dec.rate() - (d.ids.len() as f64).ln() / 64.0).abs() < 1e-15);
        let outside = (0..1024).find(|m| d.ids.binary_search(m).is_err()).unwrap();
        let out = dec.decode_detect(&dec.mean_codeword(outside), 0.1);
        assert!(out.outside_decimated_set);
        assert_eq!(out.decoded, Decision::Reject);
    }

    #[test]
    fn decimation_reports_infeasible_rate() {
        let base = make_antipodal_code(40, 1.0).unwrap();
        let ov = overlay(40, vec![0.0], 2, 1);
        let code = apply_noise_injection(&base, &ov, 0.5, 0.2, &InjectionOptions::default(), 1).unwrap();
        let err = apply_decimation(&code, 0.1, 0.1, LambdaMode::AdversaryAgnostic, 0).unwrap_err();
        match err {
            Error::Infeasible(msg) => assert!(msg.contains("base") && msg.contains("log")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn uniform_subset_basics() {
        let mut rng = stream(1, 0, StreamRole::Decimation);
        let s = sample_uniform_subset(10, 4, &mut rng).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert!(sample_uniform_subset(3, 4, &mut rng).is_err());
        assert_eq!(sample_uniform_subset(3, 3, &mut rng).unwrap(), vec![0, 1, 2]);
    }
}
