//! Adversary strategies `Z(V, M)`.
//!
//! The adversary sees the whole noisy copy `V = X′(m) + G_Adv` and the
//! transmitted message before choosing its additive signal. The strongest
//! attack covered by the analysis cancels the injected noise with the
//! Gaussian posterior mean and shifts the mean onto the target codeword.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::authcode::AuthCode;
use crate::error::{domain, Error, Result};

type CustomFn = dyn Fn(&AuthCode, &[f64], usize) -> Vec<f64> + Send + Sync;

/// A caller-supplied attack `(code, v, m) ↦ z`.
#[derive(Clone)]
pub struct CustomAttack(pub Arc<CustomFn>);

impl CustomAttack {
    pub fn new(f: impl Fn(&AuthCode, &[f64], usize) -> Vec<f64> + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }
}

impl fmt::Debug for CustomAttack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomAttack")
    }
}

/// Which attack the adversary mounts.
#[derive(Debug, Clone)]
pub enum AttackSpec {
    None,
    /// Substitute the transmitted message with `target`.
    Targeted { target: usize, weight_scale: f64 },
    /// Transmit `target` while the legitimate encoder is silent.
    Impersonation { target: usize, weight_scale: f64 },
    Custom(CustomAttack),
}

impl AttackSpec {
    pub fn targeted(target: usize) -> Self {
        AttackSpec::Targeted {
            target,
            weight_scale: 1.0,
        }
    }

    pub fn impersonation(target: usize) -> Self {
        AttackSpec::Impersonation {
            target,
            weight_scale: 1.0,
        }
    }

    pub fn target(&self) -> Option<usize> {
        match self {
            AttackSpec::Targeted { target, .. } | AttackSpec::Impersonation { target, .. } => Some(*target),
            _ => None,
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackSpec::None => f.write_str("none"),
            AttackSpec::Targeted { target, .. } => write!(f, "targeted:{target}"),
            AttackSpec::Impersonation { target, .. } => write!(f, "impersonation:{target}"),
            AttackSpec::Custom(_) => f.write_str("custom"),
        }
    }
}

impl FromStr for AttackSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "none" {
            return Ok(AttackSpec::None);
        }
        let (kind, target) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown attack {s:?}")))?;
        let target: usize = target
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad target message in {s:?}")))?;
        match kind.trim() {
            "targeted" => Ok(AttackSpec::targeted(target)),
            "impersonation" => Ok(AttackSpec::impersonation(target)),
            other => Err(Error::Parse(format!("unknown attack kind {other:?}"))),
        }
    }
}

/// MMSE weight `f²ρ_Δ/(f²ρ_Δ + ρ_Adv)`.
pub fn mmse_weight(level: f64, rho_delta: f64, rho_adv: f64) -> f64 {
    let inj = level * level * rho_delta;
    if inj == 0.0 {
        0.0
    } else {
        inj / (inj + rho_adv)
    }
}

fn check_rho_adv(rho_adv: f64) -> Result<()> {
    if rho_adv > 0.0 && rho_adv.is_finite() {
        Ok(())
    } else {
        domain(format!("adversary noise variance {rho_adv} must be positive"))
    }
}

fn check_message(code: &AuthCode, m: usize) -> Result<()> {
    if m < code.base().decoder_alphabet() {
        Ok(())
    } else {
        Err(Error::UnknownMessage(m))
    }
}

/// Substitution attack with the MMSE weight multiplied by `weight_scale`:
/// `z_i = x_i(b)+t_i(b) − x_i(m)−t_i(m) − w_i (v_i − x_i(m) − t_i(m))`.
pub fn scaled_targeted_attack(
    code: &AuthCode,
    v: &[f64],
    m: usize,
    target: usize,
    rho_adv: f64,
    weight_scale: f64,
) -> Result<Vec<f64>> {
    check_rho_adv(rho_adv)?;
    check_message(code, m)?;
    check_message(code, target)?;
    if m == target {
        return domain("the target must differ from the transmitted message");
    }
    if v.len() != code.n() {
        return Err(Error::Mismatch(format!("observation has length {}, expected {}", v.len(), code.n())));
    }
    let sent = code.mean_codeword(m);
    let forged = code.mean_codeword(target);
    let overlay = code.overlay();
    Ok((0..code.n())
        .map(|i| {
            let w = weight_scale * mmse_weight(overlay.level(m, i), code.rho_delta(), rho_adv);
            forged[i] - sent[i] - w * (v[i] - sent[i])
        })
        .collect())
}

/// The proof-optimal substitution attack: removes the posterior mean of the
/// injected noise and moves the mean onto `x(b) + t(b)`. The decoder then
/// sees `x(b) + t(b)` plus Gaussian noise of variance `τ*(f_i(m))`.
pub fn mmse_targeted_attack(code: &AuthCode, v: &[f64], m: usize, target: usize, rho_adv: f64) -> Result<Vec<f64>> {
    scaled_targeted_attack(code, v, m, target, rho_adv, 1.0)
}

/// The mean-shift term `μ_i(v, z) = z_i − x_i(b) − t_i(b) + x_i(m) + t_i(m)
/// + w_i(v_i − x_i(m) − t_i(m))`, which the MMSE attack drives to zero.
pub fn residual_mean(code: &AuthCode, v: &[f64], z: &[f64], m: usize, target: usize, rho_adv: f64) -> Vec<f64> {
    let sent = code.mean_codeword(m);
    let forged = code.mean_codeword(target);
    (0..code.n())
        .map(|i| {
            let w = mmse_weight(code.overlay().level(m, i), code.rho_delta(), rho_adv);
            z[i] - forged[i] + sent[i] + w * (v[i] - sent[i])
        })
        .collect()
}

/// MMSE substitution from the silent state onto `target`.
pub fn impersonation_attack(code: &AuthCode, v: &[f64], target: usize, rho_adv: f64) -> Result<Vec<f64>> {
    let silent = code
        .silence()
        .ok_or_else(|| Error::Domain("impersonation needs the silent message to be enabled".into()))?;
    mmse_targeted_attack(code, v, silent, target, rho_adv)
}

pub fn no_attack(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

/// Evaluates `spec` on the observation `v` of message `m`.
pub fn apply_attack(spec: &AttackSpec, code: &AuthCode, v: &[f64], m: usize, rho_adv: f64) -> Result<Vec<f64>> {
    match spec {
        AttackSpec::None => Ok(no_attack(code.n())),
        AttackSpec::Targeted { target, weight_scale } => {
            scaled_targeted_attack(code, v, m, *target, rho_adv, *weight_scale)
        }
        AttackSpec::Impersonation { target, weight_scale } => {
            let silent = code
                .silence()
                .ok_or_else(|| Error::Domain("impersonation needs the silent message to be enabled".into()))?;
            scaled_targeted_attack(code, v, silent, *target, rho_adv, *weight_scale)
        }
        AttackSpec::Custom(f) => {
            let z = (f.0)(code, v, m);
            if z.len() != code.n() {
                return Err(Error::Mismatch(format!("custom attack returned {} symbols", z.len())));
            }
            Ok(z)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::authcode::{apply_noise_injection, InjectionOptions};
    use crate::basecode::make_random_gaussian_code;
    use crate::overlay::{construct_overlay, ConstructOptions, LevelSet, RateChoice};
    use crate::rng::{gaussian_vec, stream, StreamRole};
    use proptest::prelude::*;

    fn code(silence: bool) -> AuthCode {
        let mut base = make_random_gaussian_code(40, 3, 1.0, 2).unwrap();
        let rows = if silence { 4 } else { 3 };
        if silence {
            base = base.with_silence().unwrap();
        }
        let ls = LevelSet::new(vec![0.0, 0.5]).unwrap();
        let ov = construct_overlay(
            40,
            &ls,
            0.75,
            &ConstructOptions {
                rates: RateChoice::Counts(vec![rows, 1]),
                ..Default::default()
            },
            4,
        )
        .unwrap();
        apply_noise_injection(&base, &ov, 0.8, 0.2, &InjectionOptions::default(), 5).unwrap()
    }

    #[test]
    fn zero_level_coordinates_shift_only_the_mean() {
        let c = code(false);
        let v: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let z = mmse_targeted_attack(&c, &v, 0, 1, 0.3).unwrap();
        for i in c.overlay().test_set(0, 0) {
            let expected = c.base().codeword(1)[*i] + c.offset(1, *i) - c.base().codeword(0)[*i] - c.offset(0, *i);
            assert!((z[*i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn preconditions() {
        let c = code(false);
        let v = vec![0.0; 40];
        assert!(mmse_targeted_attack(&c, &v, 0, 0, 0.3).is_err());
        assert!(mmse_targeted_attack(&c, &v, 0, 1, 0.0).is_err());
        assert!(matches!(mmse_targeted_attack(&c, &v, 0, 7, 0.3), Err(Error::UnknownMessage(7))));
        assert!(impersonation_attack(&c, &v, 1, 0.3).is_err());
        assert_eq!(no_attack(5), vec![0.0; 5]);
    }

    #[test]
    fn impersonation_uses_silent_row() {
        let c = code(true);
        let mut rng = stream(1, 0, StreamRole::Adversary);
        let v = gaussian_vec(&mut rng, 40, 1.0);
        let z = impersonation_attack(&c, &v, 2, 0.3).unwrap();
        let mu = residual_mean(&c, &v, &z, 3, 2, 0.3);
        assert!(mu.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn parse_round_trip() {
        for s in ["none", "targeted:3", "impersonation:0"] {
            assert_eq!(s.parse::<AttackSpec>().unwrap().to_string(), s);
        }
        assert!("targeted".parse::<AttackSpec>().is_err());
        assert!("targeted:x".parse::<AttackSpec>().is_err());
        assert!("jam:1".parse::<AttackSpec>().is_err());
    }

    proptest! {
        #[test]
        fn mmse_attack_nulls_mean_shift(seed in 0u64..1000, rho_adv in 0.001f64..10.0, m in 0usize..3, shift in 1usize..3) {
            let c = code(false);
            let target = (m + shift) % 3;
            let mut rng = stream(seed, 0, StreamRole::Adversary);
            let v = gaussian_vec(&mut rng, 40, 4.0);
            let z = mmse_targeted_attack(&c, &v, m, target, rho_adv).unwrap();
            for x in residual_mean(&c, &v, &z, m, target, rho_adv) {
                prop_assert!(x.abs() <= 1e-9);
            }
        }
    }
}
