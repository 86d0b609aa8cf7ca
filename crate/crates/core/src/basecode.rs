//! Deterministic reference channel codes that the authentication layer wraps.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::{standard_normals, stream, StreamRole};
use crate::stats::{EstimateReport, Metric};

/// Decoding rule attached to a [`BaseCode`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeRule {
    /// Two-codeword code decoded by the sign of `Σ y_i` (`≥ 0` → message 0).
    Antipodal,
    /// Nearest codeword in Euclidean distance; ties go to the smallest id.
    MinDistance,
}

/// A deterministic encoder table with its decoder.
///
/// When silence support is enabled, an extra all-zero codeword with id
/// `message_count()` represents "not transmitting".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaseCodeJson", into = "BaseCodeJson")]
pub struct BaseCode {
    n: usize,
    codewords: Vec<Vec<f64>>,
    half_norms: Vec<f64>,
    rule: DecodeRule,
    power: f64,
    silence: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BaseCodeJson {
    n: usize,
    omega: f64,
    codewords: Vec<Vec<f64>>,
    decoder: DecodeRule,
    #[serde(default)]
    silence: bool,
}

impl From<BaseCode> for BaseCodeJson {
    fn from(code: BaseCode) -> Self {
        let mut codewords = code.codewords;
        if code.silence {
            codewords.pop();
        }
        BaseCodeJson {
            n: code.n,
            omega: code.power,
            codewords,
            decoder: code.rule,
            silence: code.silence,
        }
    }
}

impl TryFrom<BaseCodeJson> for BaseCode {
    type Error = Error;

    fn try_from(js: BaseCodeJson) -> Result<Self> {
        let code = BaseCode::from_codewords(js.codewords, js.decoder)?;
        if code.n != js.n {
            return Err(Error::Mismatch(format!("declared n = {} but codewords have length {}", js.n, code.n)));
        }
        if js.silence {
            code.with_silence()
        } else {
            Ok(code)
        }
    }
}

fn max_power(codewords: &[Vec<f64>]) -> f64 {
    codewords
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>() / c.len() as f64)
        .fold(0.0, f64::max)
}

impl BaseCode {
    pub fn from_codewords(codewords: Vec<Vec<f64>>, rule: DecodeRule) -> Result<Self> {
        if codewords.len() < 2 {
            return domain("a base code needs at least two messages");
        }
        let n = codewords[0].len();
        if n == 0 {
            return domain("block length must be at least 1");
        }
        if codewords.iter().any(|c| c.len() != n) {
            return Err(Error::Mismatch("codewords have different lengths".into()));
        }
        if codewords.iter().flatten().any(|x| !x.is_finite()) {
            return domain("codewords must be finite");
        }
        if rule == DecodeRule::Antipodal && codewords.len() != 2 {
            return domain("the sign decoder needs exactly two codewords");
        }
        let half_norms = codewords
            .iter()
            .map(|c| 0.5 * c.iter().map(|x| x * x).sum::<f64>())
            .collect();
        Ok(Self {
            n,
            power: max_power(&codewords),
            codewords,
            half_norms,
            rule,
            silence: false,
        })
    }

    /// Adds the zero codeword for "not transmitting". The decoder switches to
    /// minimum distance over all codewords, including silence.
    pub fn with_silence(&self) -> Result<Self> {
        if self.silence {
            return Ok(self.clone());
        }
        let mut out = self.clone();
        out.codewords.push(vec![0.0; self.n]);
        out.half_norms.push(0.0);
        out.rule = DecodeRule::MinDistance;
        out.silence = true;
        Ok(out)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `|M|`, not counting silence.
    pub fn message_count(&self) -> usize {
        self.codewords.len() - usize::from(self.silence)
    }

    /// Id of the silent message, if enabled.
    pub fn silence(&self) -> Option<usize> {
        self.silence.then(|| self.codewords.len() - 1)
    }

    /// Number of codewords the decoder chooses among.
    pub fn decoder_alphabet(&self) -> usize {
        self.codewords.len()
    }

    pub fn rule(&self) -> DecodeRule {
        self.rule
    }

    /// `ω = max_m (1/n) Σ x_i²(m)`.
    pub fn power(&self) -> f64 {
        self.power
    }

    /// `r = ln|M| / n`.
    pub fn rate(&self) -> f64 {
        (self.message_count() as f64).ln() / self.n as f64
    }

    pub fn encode(&self, m: usize) -> Result<&[f64]> {
        self.codewords
            .get(m)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownMessage(m))
    }

    pub fn codeword(&self, m: usize) -> &[f64] {
        &self.codewords[m]
    }

    pub fn decode(&self, y: &[f64]) -> usize {
        match self.rule {
            DecodeRule::Antipodal => {
                if y.iter().sum::<f64>() >= 0.0 {
                    0
                } else {
                    1
                }
            }
            DecodeRule::MinDistance => {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (m, c) in self.codewords.iter().enumerate() {
                    let dot: f64 = c.iter().zip(y).map(|(a, b)| a * b).sum();
                    let score = dot - self.half_norms[m];
                    if score > best_score {
                        best_score = score;
                        best = m;
                    }
                }
                best
            }
        }
    }
}

/// `x(0) = +√ω·1`, `x(1) = −√ω·1`, decoded by the sign of the sum.
pub fn make_antipodal_code(n: usize, omega: f64) -> Result<BaseCode> {
    if n == 0 {
        return domain("block length must be at least 1");
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return domain(format!("power {omega} must be positive"));
    }
    let a = omega.sqrt();
    BaseCode::from_codewords(vec![vec![a; n], vec![-a; n]], DecodeRule::Antipodal)
}

/// I.i.d. Gaussian codebook rescaled so that its maximum per-message power
/// is exactly `ω`, with minimum-distance decoding.
pub fn make_random_gaussian_code(n: usize, message_count: usize, omega: f64, seed: u64) -> Result<BaseCode> {
    if message_count < 2 {
        return domain("a random code needs at least two messages");
    }
    if n == 0 {
        return domain("block length must be at least 1");
    }
    if !(omega > 0.0 && omega.is_finite()) {
        return domain(format!("power {omega} must be positive"));
    }
    for attempt in 0..64u64 {
        let mut rng = stream(seed, attempt, StreamRole::Codebook);
        let mut codewords: Vec<Vec<f64>> = (0..message_count).map(|_| standard_normals(&mut rng, n)).collect();
        let scale = (omega / max_power(&codewords)).sqrt();
        codewords.iter_mut().flatten().for_each(|x| *x *= scale);
        let distinct = (0..message_count).all(|a| (0..a).all(|b| codewords[a] != codewords[b]));
        if distinct {
            return BaseCode::from_codewords(codewords, DecodeRule::MinDistance);
        }
    }
    Err(Error::RetryLimit { attempts: 64 })
}

fn base_error_counts(code: &BaseCode, rho_decs: &[f64], trials: u64, seed: u64) -> Vec<u64> {
    let messages = code.message_count() as u64;
    let n = code.n();
    (0..trials)
        .into_par_iter()
        .fold(
            || (vec![0u64; rho_decs.len()], vec![0.0; n]),
            |(mut errs, mut y), t| {
                let m = (t % messages) as usize;
                let mut rng = stream(seed, t, StreamRole::Decoder);
                let g: Vec<f64> = (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                for (e, &rho) in errs.iter_mut().zip(rho_decs) {
                    let s = rho.sqrt();
                    for ((yi, xi), gi) in y.iter_mut().zip(code.codeword(m)).zip(&g) {
                        *yi = xi + s * gi;
                    }
                    if code.decode(&y) != m {
                        *e += 1;
                    }
                }
                (errs, y)
            },
        )
        .map(|(errs, _)| errs)
        .reduce(
            || vec![0u64; rho_decs.len()],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
}

/// Monte Carlo estimate of the average error probability `ε_H(ρ_Dec)`.
/// Trial `t` sends message `t mod |M|`, so messages are weighted equally.
pub fn base_error_probability(code: &BaseCode, rho_dec: f64, trials: u64, seed: u64) -> Result<EstimateReport> {
    Ok(base_error_probability_crn(code, &[rho_dec], trials, seed)?.remove(0))
}

/// Common-random-numbers variant: every noise level reuses the same
/// standard normal draws, scaled by `√ρ_Dec`.
pub fn base_error_probability_crn(code: &BaseCode, rho_decs: &[f64], trials: u64, seed: u64) -> Result<Vec<EstimateReport>> {
    if trials == 0 {
        return domain("at least one trial is required");
    }
    if let Some(r) = rho_decs.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return domain(format!("noise variance {r} must be non-negative"));
    }
    let counts = base_error_counts(code, rho_decs, trials, seed);
    counts
        .into_iter()
        .zip(rho_decs)
        .map(|(errors, &rho)| {
            Ok(EstimateReport::from_counts(Metric::BaseEpsilon, errors, trials, seed)?
                .with_param("rho_dec", rho)
                .with_param("n", code.n() as u64)
                .with_param("messages", code.message_count() as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::std_normal_cdf;
    use crate::stats::standard_error;

    #[test]
    fn antipodal_shape_and_round_trip() {
        let code = make_antipodal_code(4, 1.0).unwrap();
        assert_eq!(code.codeword(0), &[1.0; 4]);
        assert_eq!(code.power(), 1.0);
        assert_eq!(code.decode(code.codeword(0)), 0);
        assert_eq!(code.decode(code.codeword(1)), 1);
        assert!(make_antipodal_code(4, 0.0).is_err());
        assert!(matches!(code.encode(2), Err(Error::UnknownMessage(2))));
    }

    #[test]
    fn random_code_power_is_exact_and_round_trips() {
        let code = make_random_gaussian_code(64, 16, 1.0, 9).unwrap();
        assert!((code.power() - 1.0).abs() < 1e-12);
        for m in 0..16 {
            assert_eq!(code.decode(code.codeword(m)), m);
        }
        assert_eq!(code, make_random_gaussian_code(64, 16, 1.0, 9).unwrap());
        assert!(make_random_gaussian_code(8, 1, 1.0, 0).is_err());
    }

    #[test]
    fn ties_go_to_smallest_id() {
        let code = BaseCode::from_codewords(vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![1.0, 0.0]], DecodeRule::MinDistance).unwrap();
        assert_eq!(code.decode(&[0.0, 5.0]), 0);
        assert_eq!(code.decode(&[2.0, 0.0]), 0);
    }

    #[test]
    fn silence_adds_zero_codeword() {
        let code = make_antipodal_code(8, 1.0).unwrap().with_silence().unwrap();
        assert_eq!(code.message_count(), 2);
        assert_eq!(code.silence(), Some(2));
        assert_eq!(code.codeword(2), &[0.0; 8]);
        assert_eq!(code.decode(&[0.1; 8]), 2);
        assert_eq!(code.decode(&[0.9; 8]), 0);
        assert_eq!(code.power(), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let code = make_random_gaussian_code(6, 3, 2.0, 1).unwrap().with_silence().unwrap();
        let s = serde_json::to_string(&code).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["codewords"].as_array().unwrap().len(), 3);
        assert_eq!(serde_json::from_str::<BaseCode>(&s).unwrap(), code);
    }

    #[test]
    fn noiseless_limit_has_no_errors() {
        let code = make_random_gaussian_code(16, 8, 1.0, 4).unwrap();
        let r = base_error_probability(&code, 1e-12, 2000, 1).unwrap();
        assert_eq!(r.successes, 0);
    }

    #[test]
    fn antipodal_error_matches_q_function() {
        // n ω / ρ = 4 → Φ(−2)
        let code = make_antipodal_code(4, 1.0).unwrap();
        let trials = 200_000;
        let r = base_error_probability(&code, 1.0, trials, 17).unwrap();
        let p = std_normal_cdf(-2.0);
        assert!((r.estimate - p).abs() <= 3.0 * standard_error(p, trials));
    }

    #[test]
    fn common_random_numbers_are_monotone() {
        let code = make_random_gaussian_code(32, 8, 1.0, 2).unwrap();
        let reports = base_error_probability_crn(&code, &[0.2, 0.4, 0.8], 20_000, 5).unwrap();
        assert!(reports[0].successes <= reports[1].successes);
        assert!(reports[1].successes <= reports[2].successes);
    }
}
