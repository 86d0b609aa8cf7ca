//! End-to-end channel simulation and Monte Carlo estimation.
//!
//! One trial runs the whole chain
//! `X′ = enc(m)`, `V = X′ + G_Adv`, `Z = attack(V, m)`,
//! `Y = X′ + Z + G_Dec`, `m̂ = dec(Y)`.
//! The attack is evaluated on the complete `V`, so it may look at any
//! coordinate when choosing any other. Trial `t` draws `G_Δ`, `G_Adv` and
//! `G_Dec` from three independent streams indexed by `t`, which makes runs
//! reproducible and lets different experiments share noise draws.

use std::fmt;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{apply_attack, scaled_targeted_attack, AttackSpec, CustomAttack};
use crate::authcode::{AuthCode, Decision};
use crate::error::{domain, Error, Result};
use crate::rng::{stream, StreamRole};
pub use crate::stats::{wilson_interval, EstimateReport, Metric};

/// Fewest trials an estimate accepts.
pub const MIN_TRIALS: u64 = 100;

/// Noise variances of the two observation channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub rho_dec: f64,
    pub rho_adv: f64,
    /// Transmit power `ρ`, used only for capacity reporting.
    pub power_budget: f64,
}

impl ChannelParams {
    pub fn new(rho_dec: f64, rho_adv: f64, power_budget: f64) -> Result<Self> {
        if !(rho_dec > 0.0 && rho_dec.is_finite()) {
            return domain(format!("decoder noise variance {rho_dec} must be positive"));
        }
        if !(rho_adv >= 0.0 && rho_adv.is_finite()) {
            return domain(format!("adversary noise variance {rho_adv} must be non-negative"));
        }
        if !(power_budget >= 0.0 && power_budget.is_finite()) {
            return domain(format!("power budget {power_budget} must be non-negative"));
        }
        Ok(Self {
            rho_dec,
            rho_adv,
            power_budget,
        })
    }

    /// Diagnostic channel without decoder or adversary noise.
    pub fn noiseless() -> Self {
        Self {
            rho_dec: 0.0,
            rho_adv: 0.0,
            power_budget: 0.0,
        }
    }
}

/// How a trial ended, judged from the attack kind, the transmitted message
/// and the decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    /// No attack, the transmitted message was output.
    Correct,
    /// No attack, the detector rejected.
    Miss,
    /// No attack, a different message was output.
    WrongDecode,
    /// Under attack, the detector rejected.
    CorrectReject,
    /// Under attack, the transmitted message still came through.
    TransmittedKept,
    /// Under attack, the adversary's target was output.
    FalseAuthTarget,
    /// Under attack, some other wrong message was output.
    FalseAuthOther,
}

impl Classification {
    pub fn classify(attacked: bool, transmitted: usize, target: Option<usize>, decoded: Decision) -> Self {
        match (attacked, decoded) {
            (false, Decision::Reject) => Classification::Miss,
            (false, Decision::Message(d)) if d == transmitted => Classification::Correct,
            (false, Decision::Message(_)) => Classification::WrongDecode,
            (true, Decision::Reject) => Classification::CorrectReject,
            (true, Decision::Message(d)) if d == transmitted => Classification::TransmittedKept,
            (true, Decision::Message(d)) if Some(d) == target => Classification::FalseAuthTarget,
            (true, Decision::Message(_)) => Classification::FalseAuthOther,
        }
    }

    /// The decision lies outside `{transmitted, reject}`.
    pub fn is_false_auth(self) -> bool {
        matches!(self, Classification::FalseAuthTarget | Classification::FalseAuthOther)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Correct => "correct",
            Classification::Miss => "miss",
            Classification::WrongDecode => "wrong_decode",
            Classification::CorrectReject => "correct_reject",
            Classification::TransmittedKept => "transmitted_kept",
            Classification::FalseAuthTarget => "false_auth_target",
            Classification::FalseAuthOther => "false_auth_other",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    /// The encoder's message (the silent message for impersonation).
    pub transmitted: usize,
    pub decoded: Decision,
    /// Output of the base decoder before the variance tests.
    pub base_decoded: usize,
    pub classification: Classification,
}

/// Every signal of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSample {
    pub x_prime: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

fn add_noise(buf: &mut [f64], variance: f64, rng: &mut impl Rng) {
    if variance > 0.0 {
        let sd = variance.sqrt();
        for x in buf {
            *x += sd * rng.sample::<f64, _>(StandardNormal);
        }
    }
}

fn transmitted_message(code: &AuthCode, attack: &AttackSpec, m: usize) -> Result<usize> {
    match attack {
        AttackSpec::Impersonation { .. } => code
            .silence()
            .ok_or_else(|| Error::Domain("impersonation needs the silent message to be enabled".into())),
        _ => Ok(m),
    }
}

/// Runs the channel chain for trial `trial_index` and returns every signal.
/// For impersonation the encoder sends its silent message whatever `m` is.
pub fn simulate_channel(
    code: &AuthCode,
    channel: &ChannelParams,
    attack: &AttackSpec,
    m: usize,
    seed: u64,
    trial_index: u64,
) -> Result<ChannelSample> {
    let sent = transmitted_message(code, attack, m)?;
    let x_prime = code.encode(sent, &mut stream(seed, trial_index, StreamRole::Delta))?;
    let mut v = x_prime.clone();
    let z = match attack {
        AttackSpec::None => vec![0.0; code.n()],
        _ => {
            add_noise(&mut v, channel.rho_adv, &mut stream(seed, trial_index, StreamRole::Adversary));
            apply_attack(attack, code, &v, sent, channel.rho_adv)?
        }
    };
    let mut y: Vec<f64> = x_prime.iter().zip(&z).map(|(a, b)| a + b).collect();
    add_noise(&mut y, channel.rho_dec, &mut stream(seed, trial_index, StreamRole::Decoder));
    Ok(ChannelSample { x_prime, v, z, y })
}

/// One full trial, decoded and classified.
pub fn run_trial(
    code: &AuthCode,
    channel: &ChannelParams,
    attack: &AttackSpec,
    m: usize,
    seed: u64,
    trial_index: u64,
) -> Result<TrialOutcome> {
    let sent = transmitted_message(code, attack, m)?;
    let sample = simulate_channel(code, channel, attack, m, seed, trial_index)?;
    let out = code.decode_detect(&sample.y, channel.rho_dec);
    let attacked = !matches!(attack, AttackSpec::None);
    Ok(TrialOutcome {
        transmitted: sent,
        decoded: out.decoded,
        base_decoded: out.base_decoded,
        classification: Classification::classify(attacked, sent, attack.target(), out.decoded),
    })
}

/// Ordered `(a, b)` pairs: `a` is transmitted, `b` is the adversary's target.
#[derive(Debug, Clone, PartialEq)]
pub enum PairSet {
    /// All ordered pairs of distinct sendable messages.
    All,
    List(Vec<(usize, usize)>),
}

/// The attacks an estimate ranges over.
#[derive(Debug, Clone)]
pub enum AttackFamily {
    None,
    /// The MMSE substitution attack, its weight multiplied by `weight_scale`.
    Targeted { pairs: PairSet, weight_scale: f64 },
    /// MMSE substitution from the silent state onto each target.
    Impersonation { targets: Option<Vec<usize>> },
    Custom { attack: CustomAttack, pairs: PairSet },
}

impl AttackFamily {
    pub fn targeted(pairs: PairSet) -> Self {
        AttackFamily::Targeted {
            pairs,
            weight_scale: 1.0,
        }
    }

    /// The `(transmitted, target)` pairs and attack for each, in order.
    pub fn enumerate(&self, code: &AuthCode) -> Result<Vec<(usize, usize, AttackSpec)>> {
        let expand = |pairs: &PairSet| -> Vec<(usize, usize)> {
            match pairs {
                PairSet::All => {
                    let msgs = code.messages();
                    msgs.iter()
                        .flat_map(|&a| msgs.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
                        .collect()
                }
                PairSet::List(list) => list.clone(),
            }
        };
        let out: Vec<(usize, usize, AttackSpec)> = match self {
            AttackFamily::None => return domain("this metric needs an attack family"),
            AttackFamily::Targeted { pairs, weight_scale } => expand(pairs)
                .into_iter()
                .map(|(a, b)| {
                    (
                        a,
                        b,
                        AttackSpec::Targeted {
                            target: b,
                            weight_scale: *weight_scale,
                        },
                    )
                })
                .collect(),
            AttackFamily::Impersonation { targets } => {
                let silent = code
                    .silence()
                    .ok_or_else(|| Error::Domain("impersonation needs the silent message to be enabled".into()))?;
                let targets = targets.clone().unwrap_or_else(|| code.messages());
                targets
                    .into_iter()
                    .map(|b| (silent, b, AttackSpec::impersonation(b)))
                    .collect()
            }
            AttackFamily::Custom { attack, pairs } => expand(pairs)
                .into_iter()
                .map(|(a, b)| (a, b, AttackSpec::Custom(attack.clone())))
                .collect(),
        };
        if out.is_empty() {
            return domain("the pair enumeration is empty");
        }
        for (a, b, _) in &out {
            if a == b {
                return domain(format!("pair ({a}, {b}) does not name two distinct messages"));
            }
            for x in [a, b] {
                if *x >= code.base().decoder_alphabet() {
                    return Err(Error::UnknownMessage(*x));
                }
            }
        }
        Ok(out)
    }
}

impl fmt::Display for AttackFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackFamily::None => f.write_str("none"),
            AttackFamily::Targeted { weight_scale, .. } if *weight_scale == 1.0 => f.write_str("targeted"),
            AttackFamily::Targeted { weight_scale, .. } => write!(f, "targeted(weight x{weight_scale})"),
            AttackFamily::Impersonation { .. } => f.write_str("impersonation"),
            AttackFamily::Custom { .. } => f.write_str("custom"),
        }
    }
}

/// One row of the per-trial trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub m: usize,
    pub decoded: Decision,
    pub class: Classification,
}

/// Writes `trial,m,decoded,class` rows; rejections appear as `!`.
pub fn write_trial_csv<W: Write>(records: &[TrialRecord], mut w: W) -> std::io::Result<()> {
    writeln!(w, "trial,m,decoded,class")?;
    for r in records {
        writeln!(w, "{},{},{},{}", r.trial, r.m, r.decoded, r.class)?;
    }
    Ok(())
}

/// Whether a trial counts towards `metric`, and whether it enters the
/// denominator at all (false alarms only count base-correct trials).
fn score(metric: Metric, target: Option<usize>, out: &TrialOutcome) -> (bool, bool) {
    match metric {
        Metric::Epsilon | Metric::BaseEpsilon => (out.decoded != Decision::Message(out.transmitted), true),
        Metric::FalseAlarm => {
            let eligible = out.base_decoded == out.transmitted;
            (eligible && out.decoded == Decision::Reject, eligible)
        }
        Metric::AlphaStar => (target.is_some() && out.decoded.message() == target, true),
        Metric::Alpha => (out.classification.is_false_auth(), true),
    }
}

struct Job {
    transmitted: Option<usize>,
    target: Option<usize>,
    attack: AttackSpec,
}

fn jobs(code: &AuthCode, family: &AttackFamily, metric: Metric) -> Result<Vec<Job>> {
    match metric {
        Metric::Epsilon | Metric::FalseAlarm => match family {
            AttackFamily::None => Ok(vec![Job {
                transmitted: None,
                target: None,
                attack: AttackSpec::None,
            }]),
            _ => domain(format!("{metric} is estimated without an attack")),
        },
        Metric::AlphaStar | Metric::Alpha => Ok(family
            .enumerate(code)?
            .into_iter()
            .map(|(a, b, attack)| Job {
                transmitted: Some(a),
                target: Some(b),
                attack,
            })
            .collect()),
        Metric::BaseEpsilon => domain("base_epsilon is estimated on the bare base code"),
    }
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < MIN_TRIALS {
        return domain(format!("insufficient trials: {trials} < {MIN_TRIALS}"));
    }
    Ok(())
}

fn message_for(job: &Job, messages: &[usize], t: u64) -> usize {
    job.transmitted
        .unwrap_or_else(|| messages[(t % messages.len() as u64) as usize])
}

fn count_job(
    code: &AuthCode,
    channel: &ChannelParams,
    metric: Metric,
    job: &Job,
    messages: &[usize],
    trials: u64,
    seed: u64,
    offset: u64,
) -> Result<(u64, u64)> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = message_for(job, messages, t);
            let out = run_trial(code, channel, &job.attack, m, seed, offset + t)?;
            let (hit, eligible) = score(metric, job.target, &out);
            Ok((hit as u64, eligible as u64))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))
}

/// Monte Carlo estimate of `metric`.
///
/// `epsilon` and `false_alarm` cycle the transmitted message through the
/// sendable set and need [`AttackFamily::None`]. `alpha_star` and `alpha`
/// run `trials` trials per enumerated pair and report the largest per-pair
/// estimate, which is a lower estimate of the supremum over all attacks.
/// Pair `p` uses trial streams `p·trials .. (p+1)·trials`.
pub fn estimate(
    code: &AuthCode,
    channel: &ChannelParams,
    family: &AttackFamily,
    metric: Metric,
    trials: u64,
    seed: u64,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    let jobs = jobs(code, family, metric)?;
    let messages = code.messages();
    let mut best: Option<(u64, u64, usize)> = None;
    for (p, job) in jobs.iter().enumerate() {
        let (hits, eligible) = count_job(code, channel, metric, job, &messages, trials, seed, p as u64 * trials)?;
        let rate = |h: u64, e: u64| if e == 0 { 0.0 } else { h as f64 / e as f64 };
        if best.is_none_or(|(h, e, _)| rate(hits, eligible) > rate(h, e)) {
            best = Some((hits, eligible, p));
        }
    }
    let (hits, eligible, p) = best.expect("at least one job");
    if eligible == 0 {
        return domain("no trial was eligible for this metric");
    }
    let mut report = EstimateReport::from_counts(metric, hits, eligible, seed)?
        .with_param("n", code.n() as u64)
        .with_param("rho_delta", code.rho_delta())
        .with_param("delta", code.delta())
        .with_param("rho_dec", channel.rho_dec)
        .with_param("rho_adv", channel.rho_adv)
        .with_param("trials_per_pair", trials)
        .with_param("pairs", jobs.len() as u64)
        .with_param("attack", family.to_string());
    let job = &jobs[p];
    if let (Some(a), Some(b)) = (job.transmitted, job.target) {
        report.worst_pair = Some((a, b));
    }
    Ok(report)
}

/// Runs [`estimate`]'s trials for a single-job metric and returns every
/// trial for CSV export alongside the report.
pub fn estimate_with_trace(
    code: &AuthCode,
    channel: &ChannelParams,
    family: &AttackFamily,
    metric: Metric,
    trials: u64,
    seed: u64,
) -> Result<(EstimateReport, Vec<TrialRecord>)> {
    let report = estimate(code, channel, family, metric, trials, seed)?;
    let jobs = jobs(code, family, metric)?;
    let messages = code.messages();
    let mut records = Vec::new();
    for (p, job) in jobs.iter().enumerate() {
        let offset = p as u64 * trials;
        let part: Result<Vec<TrialRecord>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let m = message_for(job, &messages, t);
                let out = run_trial(code, channel, &job.attack, m, seed, offset + t)?;
                Ok(TrialRecord {
                    trial: offset + t,
                    m: out.transmitted,
                    decoded: out.decoded,
                    class: out.classification,
                })
            })
            .collect();
        records.extend(part?);
    }
    Ok((report, records))
}

/// Targeted-attack success counts for the pair `(a, b)` at several multiples
/// of the MMSE weight, all on the same noise draws (trial streams
/// `0..trials`). Returns one `alpha_star` report per scale.
pub fn weight_grid(
    code: &AuthCode,
    channel: &ChannelParams,
    pair: (usize, usize),
    scales: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<EstimateReport>> {
    check_trials(trials)?;
    if scales.is_empty() {
        return domain("the weight grid is empty");
    }
    let (a, b) = pair;
    let probe = AttackSpec::targeted(b);
    let counts = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<u64>> {
            let sample = simulate_channel(code, channel, &probe, a, seed, t)?;
            let noise: Vec<f64> = sample
                .y
                .iter()
                .zip(&sample.x_prime)
                .zip(&sample.z)
                .map(|((y, x), z)| y - x - z)
                .collect();
            scales
                .iter()
                .map(|&s| {
                    let z = scaled_targeted_attack(code, &sample.v, a, b, channel.rho_adv, s)?;
                    let y: Vec<f64> = sample
                        .x_prime
                        .iter()
                        .zip(&z)
                        .zip(&noise)
                        .map(|((x, z), g)| x + z + g)
                        .collect();
                    let hit = code.decode_detect(&y, channel.rho_dec).decoded == Decision::Message(b);
                    Ok(hit as u64)
                })
                .collect()
        })
        .try_reduce(
            || vec![0; scales.len()],
            |mut acc, c| {
                acc.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                Ok(acc)
            },
        )?;
    counts
        .into_iter()
        .zip(scales)
        .map(|(hits, &s)| {
            let mut r = EstimateReport::from_counts(Metric::AlphaStar, hits, trials, seed)?
                .with_param("weight_scale", s)
                .with_param("rho_adv", channel.rho_adv)
                .with_param("rho_dec", channel.rho_dec);
            r.worst_pair = Some(pair);
            Ok(r)
        })
        .collect()
}
