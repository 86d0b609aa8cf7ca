//! Construct → modify → simulate → bounds pipeline and its reports.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use overlay_auth::authcode::{apply_noise_injection, apply_decimation, AuthCode, LambdaMode, InjectionOptions, OffsetMode};
use overlay_auth::basecode::{base_error_probability, make_antipodal_code, make_random_gaussian_code, BaseCode};
use overlay_auth::bounds::{capacity, optimal_levels, rate_gap, injection_bounds, decimation_bounds, BoundInputs};
use overlay_auth::numerics::std_normal_cdf;
use overlay_auth::overlay::{
    construct_overlay, ConstructOptions, DefectTerm, LevelSet, OverlayCode, RateChoice,
};
use overlay_auth::simulate::{estimate, estimate_with_trace, write_trial_csv, AttackFamily, ChannelParams, PairSet};
use overlay_auth::stats::{EstimateReport, Metric};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{AttackKind, BaseKind, DecimationMode, ExperimentConfig, LevelsSpec, RatesSpec, Targets};

/// Version string stamped on every report.
pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// The codes an experiment runs on.
pub struct Pipeline {
    pub base: BaseCode,
    pub overlay: OverlayCode,
    pub code: AuthCode,
}

pub fn level_set(cfg: &ExperimentConfig) -> Result<LevelSet> {
    match &cfg.overlay.levels {
        LevelsSpec::Explicit(levels) => Ok(LevelSet::new(levels.clone())?),
        LevelsSpec::Auto(count) => {
            let opt = optimal_levels(
                *count,
                cfg.overlay.gamma,
                cfg.auth.delta,
                cfg.auth.rho_delta,
                cfg.channel.rho_dec,
                None,
            )?;
            opt.level_set.ok_or_else(|| {
                anyhow!(
                    "heuristic levels {:?} are not admissible (entries {:?} fall outside [0,1) or out of order)",
                    opt.values,
                    opt.invalid
                )
            })
        }
    }
}

/// Splits `total` into `parts` factors whose product is `total`, keeping
/// them as even as the prime factorization allows.
pub fn balanced_counts(total: usize, parts: usize) -> Vec<usize> {
    let mut primes = Vec::new();
    let mut rest = total;
    let mut p = 2;
    while p * p <= rest {
        while rest % p == 0 {
            primes.push(p);
            rest /= p;
        }
        p += 1;
    }
    if rest > 1 {
        primes.push(rest);
    }
    let mut counts = vec![1usize; parts];
    for q in primes.into_iter().rev() {
        let (i, _) = counts
            .iter()
            .enumerate()
            .rev()
            .min_by_key(|(_, c)| **c)
            .expect("at least one level");
        counts[i] *= q;
    }
    counts
}

fn make_base(cfg: &ExperimentConfig, messages: usize) -> Result<BaseCode> {
    let base = match cfg.base.kind {
        BaseKind::Antipodal => make_antipodal_code(cfg.base.n, cfg.base.omega)?,
        BaseKind::Gaussian => make_random_gaussian_code(cfg.base.n, messages, cfg.base.omega, cfg.seed)?,
    };
    Ok(if cfg.base.silence { base.with_silence()? } else { base })
}

pub fn build(cfg: &ExperimentConfig) -> Result<Pipeline> {
    cfg.validate()?;
    let ls = level_set(cfg).context("level set")?;
    let silence = cfg.base.silence as usize;
    let (base, overlay) = if let Some(path) = &cfg.overlay.file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading overlay {path}"))?;
        let overlay = OverlayCode::from_json_str(&text).context("overlay file")?;
        let base = make_base(cfg, overlay.message_count() - silence).context("base code")?;
        (base, overlay)
    } else {
        let construct = |rates: RateChoice| {
            let opts = ConstructOptions {
                rates,
                max_messages: cfg.overlay.max_messages,
                ..Default::default()
            };
            construct_overlay(cfg.base.n, &ls, cfg.overlay.gamma, &opts, cfg.seed).context("overlay construction")
        };
        match &cfg.overlay.rates {
            RatesSpec::Auto | RatesSpec::Counts(_) => {
                let base = make_base(cfg, cfg.base.messages).context("base code")?;
                let counts = match &cfg.overlay.rates {
                    RatesSpec::Counts(c) => c.clone(),
                    _ => balanced_counts(base.decoder_alphabet(), ls.len()),
                };
                (base, construct(RateChoice::Counts(counts))?)
            }
            design => {
                let defect = if *design == RatesSpec::Existence {
                    DefectTerm::Existence
                } else {
                    DefectTerm::Construction
                };
                let overlay = construct(RateChoice::Design(defect))?;
                if cfg.base.kind == BaseKind::Antipodal && overlay.message_count() != 2 + silence {
                    bail!(
                        "overlay construction: the design rates give {} messages but the antipodal code has {}",
                        overlay.message_count(),
                        2 + silence
                    );
                }
                let base = make_base(cfg, overlay.message_count() - silence).context("base code")?;
                (base, overlay)
            }
        }
    };
    let opts = InjectionOptions {
        offsets: if cfg.auth.zero_offsets { OffsetMode::Zero } else { OffsetMode::Random },
        ..Default::default()
    };
    let mut code =
        apply_noise_injection(&base, &overlay, cfg.auth.rho_delta, cfg.auth.delta, &opts, cfg.seed).context("noise injection")?;
    let mode = match cfg.auth.decimation {
        DecimationMode::None => None,
        DecimationMode::Exact => Some(LambdaMode::Exact),
        DecimationMode::Agnostic => Some(LambdaMode::AdversaryAgnostic),
    };
    if let Some(mode) = mode {
        code = apply_decimation(&code, cfg.channel.rho_adv, cfg.channel.rho_dec, mode, cfg.seed).context("decimation")?;
    }
    Ok(Pipeline { base, overlay, code })
}

/// Base-code error at the decoder noise plus injected noise: closed form
/// for the antipodal code, Monte Carlo otherwise (when trials are allowed).
fn base_error(cfg: &ExperimentConfig, p: &Pipeline) -> Result<Option<(f64, &'static str)>> {
    if let Some(e) = cfg.base.eps_h {
        return Ok(Some((e, "configured")));
    }
    let rho = cfg.channel.rho_dec + cfg.auth.rho_delta;
    if cfg.base.kind == BaseKind::Antipodal && !cfg.base.silence {
        let z = (cfg.base.n as f64 * cfg.base.omega / rho).sqrt();
        return Ok(Some((std_normal_cdf(-z), "closed_form")));
    }
    if cfg.trials == 0 {
        return Ok(None);
    }
    let r = base_error_probability(&p.base, rho, cfg.trials, cfg.seed)?;
    Ok(Some((r.estimate, "monte_carlo")))
}

/// Every closed-form quantity for the configured codes.
pub fn bounds_json(cfg: &ExperimentConfig, p: &Pipeline) -> Result<Value> {
    let eps = base_error(cfg, p)?;
    let inputs = BoundInputs {
        n: cfg.base.n,
        level_set: p.overlay.level_set().clone(),
        gamma: cfg.overlay.gamma,
        omega_h: p.base.power(),
        r_h: p.base.rate(),
        eps_h: eps.map_or(0.0, |e| e.0),
        rho_delta: cfg.auth.rho_delta,
        delta: cfg.auth.delta,
        rho_adv: cfg.channel.rho_adv,
        rho_dec: cfg.channel.rho_dec,
    };
    let t1 = injection_bounds(&inputs)?;
    let agnostic = cfg.auth.decimation == DecimationMode::Agnostic;
    let t2 = decimation_bounds(&inputs, agnostic)?;
    let mut injection = serde_json::to_value(&t1)?;
    if eps.is_none() {
        injection["epsilon_bound"] = Value::Null;
        injection["epsilon_bound_alt"] = Value::Null;
    }
    let gap = if cfg.auth.rho_delta < cfg.channel.power {
        Some(rate_gap(cfg.channel.power, cfg.channel.rho_dec, cfg.auth.rho_delta)?)
    } else {
        None
    };
    let heuristic = optimal_levels(
        p.overlay.level_set().len(),
        cfg.overlay.gamma,
        cfg.auth.delta,
        cfg.auth.rho_delta,
        cfg.channel.rho_dec,
        Some(p.overlay.ell()),
    )
    .ok();
    Ok(json!({
        "base_error": eps.map(|(e, source)| json!({ "value": e, "source": source })),
        "injection": injection,
        "decimation": t2,
        "capacity": capacity(cfg.channel.power, cfg.channel.rho_dec, cfg.channel.rho_adv)?.value(),
        "rate_gap": gap,
        "heuristic_levels": heuristic,
    }))
}

fn bound_for(metric: Metric, bounds: &Value, decimated: bool) -> Option<f64> {
    let inj = &bounds["injection"];
    match metric {
        Metric::Epsilon => {
            let a = inj["epsilon_bound"].as_f64()?;
            let b = inj["epsilon_bound_alt"].as_f64()?;
            Some(a.max(b))
        }
        Metric::FalseAlarm => inj["false_alarm_term"].as_f64(),
        Metric::AlphaStar => inj["alpha_star_bound"].as_f64(),
        Metric::Alpha if decimated => bounds["decimation"]["alpha_bound"].as_f64(),
        _ => None,
    }
}

pub fn attack_family(cfg: &ExperimentConfig, code: &AuthCode, metric: Metric) -> AttackFamily {
    if matches!(metric, Metric::Epsilon | Metric::FalseAlarm) {
        return AttackFamily::None;
    }
    let to = |b: usize| {
        code.messages()
            .into_iter()
            .filter(|&a| a != b)
            .map(|a| (a, b))
            .collect::<Vec<_>>()
    };
    match cfg.attack.kind {
        AttackKind::None => AttackFamily::None,
        AttackKind::Targeted => AttackFamily::Targeted {
            pairs: match &cfg.attack.targets {
                Targets::All => PairSet::All,
                Targets::To(b) => PairSet::List(to(*b)),
                Targets::Pairs(list) => PairSet::List(list.clone()),
            },
            weight_scale: cfg.attack.weight_scale,
        },
        AttackKind::Impersonation => AttackFamily::Impersonation {
            targets: match &cfg.attack.targets {
                Targets::All => None,
                Targets::To(b) => Some(vec![*b]),
                Targets::Pairs(list) => Some(list.iter().map(|p| p.1).collect()),
            },
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub version: &'static str,
    pub config_hash: String,
    pub config: Value,
    pub construction: Value,
    pub bounds: Value,
    pub estimates: Vec<EstimateReport>,
    /// Every estimate that has a bound is dominated by it.
    pub all_dominated: bool,
}

impl Report {
    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

pub fn construction_json(p: &Pipeline) -> Value {
    let prov = p.overlay.provenance();
    json!({
        "n": p.code.n(),
        "ell": p.overlay.ell(),
        "levels": p.overlay.level_set().levels(),
        "overlay_messages": p.overlay.message_count(),
        "overlay_level_counts": prov.map(|p| p.level_counts.clone()),
        "overlay_attempts": prov.map(|p| p.attempts),
        "base_messages": p.base.message_count(),
        "base_power": p.base.power(),
        "base_rate": p.base.rate(),
        "silence": p.code.silence(),
        "sendable_messages": p.code.messages().len(),
        "rate": p.code.rate(),
        "offset_resamples": p.code.resamples(),
        "max_expected_power": p.code.max_expected_power(),
        "decimation": p.code.decimation(),
    })
}

/// Runs the whole pipeline. With `trials = 0` only closed-form quantities
/// are reported.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    let p = build(cfg)?;
    let bounds = bounds_json(cfg, &p).context("bounds")?;
    let channel = ChannelParams::new(cfg.channel.rho_dec, cfg.channel.rho_adv, cfg.channel.power)?;
    let decimated = p.code.decimation().is_some();
    let mut estimates = Vec::new();
    if cfg.trials > 0 {
        for (i, &metric) in cfg.metrics.iter().enumerate() {
            let family = attack_family(cfg, &p.code, metric);
            let report = match (&cfg.output.trace, i) {
                (Some(path), 0) => {
                    let (r, records) = estimate_with_trace(&p.code, &channel, &family, metric, cfg.trials, cfg.seed)
                        .with_context(|| format!("simulation of {metric}"))?;
                    let file = std::fs::File::create(path).with_context(|| format!("creating {path}"))?;
                    write_trial_csv(&records, std::io::BufWriter::new(file))?;
                    r
                }
                _ => estimate(&p.code, &channel, &family, metric, cfg.trials, cfg.seed)
                    .with_context(|| format!("simulation of {metric}"))?,
            };
            let report = match bound_for(metric, &bounds, decimated) {
                Some(b) => report.with_bound(b),
                None => report,
            };
            estimates.push(report);
        }
    }
    let all_dominated = estimates.iter().all(|e| e.dominated != Some(false));
    Ok(Report {
        version: VERSION,
        config_hash: cfg.hash(),
        config: serde_json::to_value(cfg)?,
        construction: construction_json(&p),
        bounds,
        estimates,
        all_dominated,
    })
}

/// Scalars a sweep may vary, with the configuration key each one sets.
pub const SWEEP_AXES: &[(&str, &str)] = &[
    ("rho_adv", "channel.rho_adv"),
    ("rho_delta", "auth.rho_delta"),
    ("delta", "auth.delta"),
    ("n", "base.n"),
];

pub const SWEEP_HEADER: &str = "axis,metric,estimate,ci_lo,ci_hi,bound,dominated,config_hash,version";

/// One experiment per value; one CSV row per estimate.
pub fn sweep(cfg: &ExperimentConfig, axis: &str, values: &[String]) -> Result<(String, bool)> {
    let key = SWEEP_AXES
        .iter()
        .find(|(a, _)| *a == axis)
        .map(|(_, k)| *k)
        .ok_or_else(|| {
            let names: Vec<&str> = SWEEP_AXES.iter().map(|(a, _)| *a).collect();
            anyhow!("`{axis}` is not sweepable; choose one of {}", names.join(", "))
        })?;
    let mut out = String::new();
    writeln!(out, "{SWEEP_HEADER}")?;
    let mut all = true;
    for value in values {
        let mut c = cfg.clone();
        c.set(key, value)?;
        let report = run_experiment(&c).with_context(|| format!("{axis} = {value}"))?;
        all &= report.all_dominated;
        for e in &report.estimates {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                value.trim(),
                e.metric,
                e.estimate,
                e.ci_lo,
                e.ci_hi,
                e.bound.map(|b| b.to_string()).unwrap_or_default(),
                e.dominated.map(|d| d.to_string()).unwrap_or_default(),
                report.config_hash,
                VERSION
            )?;
        }
    }
    Ok((out, all))
}
