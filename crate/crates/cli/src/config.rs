//! Experiment configuration.
//!
//! Text format: one `key = value` per line, `#` starts a comment, and a
//! `[section]` line prefixes the keys below it with `section.`, so
//!
//! ```text
//! [channel]
//! rho_adv = 0.1
//! ```
//!
//! is the same as `channel.rho_adv = 0.1`. A file whose first non-blank
//! character is `{` is read as JSON instead; nested objects map to dotted
//! keys. Every key can also be given on the command line as `--key value`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use overlay_auth::adversary::AttackSpec;
use overlay_auth::stats::Metric;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("key `{key}`: {message}")]
    Value { key: String, message: String },
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

type Result<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseKind {
    Antipodal,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaseConfig {
    pub kind: BaseKind,
    pub n: usize,
    pub omega: f64,
    /// Message count of a Gaussian codebook; antipodal codes have two.
    pub messages: usize,
    pub silence: bool,
    /// Overrides the base-code error `ε_H(ρ_Dec+ρ_Δ)` used in bounds.
    pub eps_h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LevelsSpec {
    Explicit(Vec<f64>),
    /// Heuristic levels with this many entries in `K`.
    Auto(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum RatesSpec {
    /// Split the base decoder alphabet across the levels.
    Auto,
    Existence,
    Construction,
    Counts(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlayConfig {
    pub levels: LevelsSpec,
    pub gamma: f64,
    pub rates: RatesSpec,
    pub max_messages: usize,
    /// Load the overlay from this JSON file instead of constructing it.
    pub file: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DecimationMode {
    None,
    Exact,
    Agnostic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuthConfig {
    pub rho_delta: f64,
    pub delta: f64,
    pub zero_offsets: bool,
    pub decimation: DecimationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelConfig {
    pub rho_dec: f64,
    pub rho_adv: f64,
    pub power: f64,
}

/// Who the adversary attacks.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Targets {
    /// Every ordered pair of distinct messages.
    All,
    /// Every sendable message other than the target.
    To(usize),
    Pairs(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    None,
    Targeted,
    Impersonation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackConfig {
    pub kind: AttackKind,
    pub targets: Targets,
    pub weight_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: Option<String>,
    /// Per-trial CSV of the first simulated metric.
    pub trace: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    pub metrics: Vec<Metric>,
    pub base: BaseConfig,
    pub overlay: OverlayConfig,
    pub auth: AuthConfig,
    pub channel: ChannelConfig,
    pub attack: AttackConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 100_000,
            metrics: vec![Metric::Epsilon, Metric::AlphaStar],
            base: BaseConfig {
                kind: BaseKind::Antipodal,
                n: 64,
                omega: 1.0,
                messages: 16,
                silence: false,
                eps_h: None,
            },
            overlay: OverlayConfig {
                levels: LevelsSpec::Explicit(vec![0.0]),
                gamma: 0.75,
                rates: RatesSpec::Auto,
                max_messages: 1024,
                file: None,
            },
            auth: AuthConfig {
                rho_delta: 1.0,
                delta: 0.2,
                zero_offsets: false,
                decimation: DecimationMode::None,
            },
            channel: ChannelConfig {
                rho_dec: 0.1,
                rho_adv: 0.1,
                power: 1.0,
            },
            attack: AttackConfig {
                kind: AttackKind::Targeted,
                targets: Targets::All,
                weight_scale: 1.0,
            },
            output: OutputConfig { dir: None, trace: None },
        }
    }
}

fn value_err(key: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        message: message.to_string(),
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| value_err(key, format!("{e} ({value:?})")))
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    let value = value.trim().trim_start_matches('[').trim_end_matches(']');
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| num(key, v)).collect()
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(value_err(key, format!("expected true or false, got {other:?}"))),
    }
}

fn optional(value: &str) -> Option<String> {
    let v = value.trim();
    (!v.is_empty() && v != "none").then(|| v.to_string())
}

fn parse_pairs(key: &str, value: &str) -> Result<Vec<(usize, usize)>> {
    value
        .split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let (a, b) = p
                .split_once('>')
                .ok_or_else(|| value_err(key, format!("pair {p:?} is not of the form a>b")))?;
            Ok((num(key, a)?, num(key, b)?))
        })
        .collect()
}

/// All keys accepted by [`ExperimentConfig::set`].
pub const KEYS: &[&str] = &[
    "seed",
    "trials",
    "metrics",
    "base.kind",
    "base.n",
    "base.omega",
    "base.messages",
    "base.silence",
    "base.eps_h",
    "overlay.levels",
    "overlay.gamma",
    "overlay.rates",
    "overlay.max_messages",
    "overlay.file",
    "auth.rho_delta",
    "auth.delta",
    "auth.offsets",
    "auth.decimation",
    "channel.rho_dec",
    "channel.rho_adv",
    "channel.power",
    "attack",
    "attack.pairs",
    "attack.weight_scale",
    "output.dir",
    "output.trace",
];

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim().trim_matches('"');
        match key {
            "seed" => self.seed = num(key, v)?,
            "trials" => self.trials = num::<f64>(key, v).and_then(|t| whole(key, t))?,
            "metrics" => {
                self.metrics = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.parse::<Metric>().map_err(|e| value_err(key, e)))
                    .collect::<Result<_>>()?
            }
            "base.kind" => {
                self.base.kind = match v {
                    "antipodal" => BaseKind::Antipodal,
                    "gaussian" => BaseKind::Gaussian,
                    other => return Err(value_err(key, format!("unknown base code {other:?}"))),
                }
            }
            "base.n" => self.base.n = num(key, v)?,
            "base.omega" => self.base.omega = num(key, v)?,
            "base.messages" => self.base.messages = num(key, v)?,
            "base.silence" => self.base.silence = boolean(key, v)?,
            "base.eps_h" => self.base.eps_h = optional(v).map(|s| num(key, &s)).transpose()?,
            "overlay.levels" => {
                self.overlay.levels = match v.strip_prefix("auto") {
                    Some(rest) => {
                        let count = rest.trim_start_matches(':').trim();
                        LevelsSpec::Auto(if count.is_empty() { 2 } else { num(key, count)? })
                    }
                    None => LevelsSpec::Explicit(list(key, v)?),
                }
            }
            "overlay.gamma" => self.overlay.gamma = num(key, v)?,
            "overlay.rates" => {
                self.overlay.rates = match v {
                    "auto" => RatesSpec::Auto,
                    "existence" => RatesSpec::Existence,
                    "construction" => RatesSpec::Construction,
                    counts => RatesSpec::Counts(list(key, counts)?),
                }
            }
            "overlay.max_messages" => self.overlay.max_messages = num(key, v)?,
            "overlay.file" => self.overlay.file = optional(v),
            "auth.rho_delta" => self.auth.rho_delta = num(key, v)?,
            "auth.delta" => self.auth.delta = num(key, v)?,
            "auth.offsets" => {
                self.auth.zero_offsets = match v {
                    "random" => false,
                    "zero" => true,
                    other => return Err(value_err(key, format!("expected random or zero, got {other:?}"))),
                }
            }
            "auth.decimation" => {
                self.auth.decimation = match v {
                    "none" => DecimationMode::None,
                    "exact" => DecimationMode::Exact,
                    "agnostic" => DecimationMode::Agnostic,
                    other => return Err(value_err(key, format!("expected none, exact or agnostic, got {other:?}"))),
                }
            }
            "channel.rho_dec" => self.channel.rho_dec = num(key, v)?,
            "channel.rho_adv" => self.channel.rho_adv = num(key, v)?,
            "channel.power" => self.channel.power = num(key, v)?,
            "attack" => self.set_attack(v)?,
            "attack.pairs" => self.attack.targets = Targets::Pairs(parse_pairs(key, v)?),
            "attack.weight_scale" => self.attack.weight_scale = num(key, v)?,
            "output.dir" => self.output.dir = optional(v),
            "output.trace" => self.output.trace = optional(v),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn set_attack(&mut self, v: &str) -> Result<()> {
        let all = |kind| (kind, Targets::All);
        let (kind, targets) = match v {
            "targeted:all" | "targeted" => all(AttackKind::Targeted),
            "impersonation:all" | "impersonation" => all(AttackKind::Impersonation),
            other => match other.parse::<AttackSpec>().map_err(|e| value_err("attack", e))? {
                AttackSpec::None => (AttackKind::None, Targets::All),
                AttackSpec::Targeted { target, .. } => (AttackKind::Targeted, Targets::To(target)),
                AttackSpec::Impersonation { target, .. } => (AttackKind::Impersonation, Targets::To(target)),
                AttackSpec::Custom(_) => unreachable!("custom attacks are not parsed"),
            },
        };
        self.attack.kind = kind;
        self.attack.targets = targets;
        Ok(())
    }

    /// Parses the text or JSON format on top of the defaults.
    pub fn parse_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        Ok(cfg)
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        if text.trim_start().starts_with('{') {
            let json: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
                line: e.line(),
                message: e.to_string(),
            })?;
            let mut flat = BTreeMap::new();
            flatten("", &json, &mut flat);
            for (k, v) in flat {
                self.set(&k, &v)?;
            }
            return Ok(());
        }
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax { line: idx + 1, message };
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(format!("unterminated section header {line:?}")))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected `key = value`, got {line:?}")))?;
            let key = if section.is_empty() {
                k.trim().to_string()
            } else {
                format!("{section}.{}", k.trim())
            };
            self.set(&key, v).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    /// Checks every precondition the pipeline will rely on.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if let LevelsSpec::Explicit(levels) = &self.overlay.levels {
            if levels.is_empty() {
                return bad("at least one level is required".into());
            }
            if levels.iter().any(|k| !(0.0..1.0).contains(k)) {
                return bad("levels must lie in [0,1)".into());
            }
            if levels.windows(2).any(|w| w[0] >= w[1]) {
                return bad("levels must be strictly increasing".into());
            }
        }
        if let LevelsSpec::Auto(0) = self.overlay.levels {
            return bad("auto levels need a count of at least 1".into());
        }
        if !(self.overlay.gamma > 0.5 && self.overlay.gamma < 1.0) {
            return bad(format!(
                "gamma must lie in the open interval (1/2, 1), got {}",
                self.overlay.gamma
            ));
        }
        if self.base.n == 0 {
            return bad("base.n must be positive".into());
        }
        if !(self.base.omega > 0.0 && self.base.omega.is_finite()) {
            return bad("base.omega must be positive".into());
        }
        if self.base.kind == BaseKind::Gaussian && self.base.messages < 2 {
            return bad("a gaussian base code needs at least 2 messages".into());
        }
        if let Some(e) = self.base.eps_h {
            if !(0.0..=1.0).contains(&e) {
                return bad("base.eps_h must lie in [0,1]".into());
            }
        }
        if !(self.auth.rho_delta > 0.0 && self.auth.rho_delta.is_finite()) {
            return bad("auth.rho_delta must be positive".into());
        }
        if !(self.auth.delta > 0.0 && self.auth.delta < 1.0) {
            return bad(format!("auth.delta must lie in (0,1), got {}", self.auth.delta));
        }
        if !(self.channel.rho_dec > 0.0 && self.channel.rho_dec.is_finite()) {
            return bad("channel.rho_dec must be positive".into());
        }
        if !(self.channel.rho_adv >= 0.0 && self.channel.rho_adv.is_finite()) {
            return bad("channel.rho_adv must be non-negative".into());
        }
        if !(self.channel.power >= 0.0 && self.channel.power.is_finite()) {
            return bad("channel.power must be non-negative".into());
        }
        if self.trials != 0 && self.trials < 100 {
            return bad(format!("trials must be 0 (bounds only) or at least 100, got {}", self.trials));
        }
        let attacked = self
            .metrics
            .iter()
            .any(|m| matches!(m, Metric::AlphaStar | Metric::Alpha));
        if attacked && self.attack.kind == AttackKind::None {
            return bad("alpha metrics need an attack".into());
        }
        if attacked && self.attack.kind == AttackKind::Targeted && self.channel.rho_adv <= 0.0 {
            return bad("the MMSE attack needs channel.rho_adv > 0".into());
        }
        if self.attack.kind == AttackKind::Impersonation && !self.base.silence {
            return bad("impersonation needs base.silence = true".into());
        }
        if self.metrics.contains(&Metric::BaseEpsilon) {
            return bad("base_epsilon is not an experiment metric".into());
        }
        if !(self.attack.weight_scale.is_finite()) {
            return bad("attack.weight_scale must be finite".into());
        }
        Ok(())
    }

    /// Canonical JSON of the resolved configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    /// SHA-256 of [`canonical_json`](Self::canonical_json), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

fn whole(key: &str, t: f64) -> Result<u64> {
    if t >= 0.0 && t.fract() == 0.0 && t < 1e18 {
        Ok(t as u64)
    } else {
        Err(value_err(key, format!("{t} is not a whole number")))
    }
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, String>) {
    use serde_json::Value;
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                if prefix.is_empty() && k == "attack" && !v.is_object() {
                    out.insert("attack".into(), scalar(v));
                } else {
                    flatten(&key(k), v, out);
                }
            }
        }
        other => {
            out.insert(prefix.to_string(), scalar(other));
        }
    }
}

fn scalar(v: &serde_json::Value) -> String {
    use serde_json::Value;
    match v {
        Value::String(s) => s.clone(),
        Value::Array(items) => items.iter().map(scalar).collect::<Vec<_>>().join(","),
        Value::Null => "none".into(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = ExperimentConfig::parse_str("base.kind = antipodal\nbase.n = 64\n").unwrap();
        assert_eq!(cfg.overlay.gamma, 0.75);
        assert_eq!(cfg.auth.delta, 0.2);
        assert_eq!(cfg.trials, 100_000);
        assert_eq!(cfg.base.n, 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_and_comments() {
        let text = "# experiment\nseed = 9\n[channel]\nrho_adv = 0.5 # weak adversary\n[overlay]\nlevels = 0, 0.5\n";
        let cfg = ExperimentConfig::parse_str(text).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.channel.rho_adv, 0.5);
        assert_eq!(cfg.overlay.levels, LevelsSpec::Explicit(vec![0.0, 0.5]));
    }

    #[test]
    fn json_matches_text() {
        let text = ExperimentConfig::parse_str("trials = 1e3\nchannel.rho_adv = 0.5\nattack = targeted:1\n").unwrap();
        let json = ExperimentConfig::parse_str(r#"{"trials": 1000, "channel": {"rho_adv": 0.5}, "attack": "targeted:1"}"#)
            .unwrap();
        assert_eq!(text, json);
        assert_eq!(text.hash(), json.hash());
        assert_eq!(json.attack.targets, Targets::To(1));
    }

    #[test]
    fn diagnostics_name_line_and_key() {
        let err = ExperimentConfig::parse_str("seed = 1\nbase.n = lots\n").unwrap_err();
        assert!(matches!(err, ConfigError::Syntax { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("base.n"));
        let err = ExperimentConfig::parse_str("colour = red").unwrap_err();
        assert!(err.to_string().contains("colour"));
        assert!(ExperimentConfig::parse_str("just words").is_err());
    }

    #[test]
    fn level_and_gamma_validation() {
        let cfg = ExperimentConfig::parse_str("overlay.levels = 0, 1.0").unwrap();
        assert_eq!(
            cfg.validate().unwrap_err(),
            ConfigError::Invalid("levels must lie in [0,1)".into())
        );
        let cfg = ExperimentConfig::parse_str("overlay.gamma = 0.5").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("(1/2, 1)"));
        let cfg = ExperimentConfig::parse_str("trials = 50").unwrap();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig::parse_str("attack = impersonation:0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let samples = [
            ("base.kind", "gaussian"),
            ("base.silence", "true"),
            ("base.eps_h", "0.01"),
            ("overlay.levels", "auto:3"),
            ("overlay.rates", "4,4"),
            ("overlay.file", "x.json"),
            ("auth.offsets", "zero"),
            ("auth.decimation", "agnostic"),
            ("attack", "none"),
            ("attack.pairs", "0>1, 1>0"),
            ("metrics", "epsilon,false_alarm"),
            ("output.dir", "out"),
            ("output.trace", "t.csv"),
        ];
        for key in KEYS {
            let value = samples.iter().find(|(k, _)| k == key).map_or("1", |(_, v)| *v);
            ExperimentConfig::default().set(key, value).unwrap_or_else(|e| panic!("{key}: {e}"));
        }
    }
}
