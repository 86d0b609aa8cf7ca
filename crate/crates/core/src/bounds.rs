//! Closed-form evaluation of the achievability bounds, the capacity
//! expression, level-set heuristics and the combinatorial tail bounds.
//!
//! Bounds that exceed one are returned as computed, together with a
//! vacuity flag, rather than clamped.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::{d2_raw, i2_raw, ln_binomial, Nats, Probability};
use crate::overlay::LevelSet;

fn check_variances(rho_delta: f64, rho_adv: f64, rho_dec: f64) -> Result<()> {
    if !(rho_delta > 0.0 && rho_delta.is_finite()) {
        return domain(format!("injection power {rho_delta} must be positive"));
    }
    if !(rho_adv >= 0.0 && rho_adv.is_finite()) {
        return domain(format!("adversary noise variance {rho_adv} must be non-negative"));
    }
    if !(rho_dec > 0.0 && rho_dec.is_finite()) {
        return domain(format!("decoder noise variance {rho_dec} must be positive"));
    }
    Ok(())
}

/// Decoder-side variance after the adversary's optimal cancellation of
/// level-`a` injected noise: `a²ρ_Δρ_Adv/(a²ρ_Δ + ρ_Adv) + ρ_Dec`.
pub fn tau_star(a: f64, rho_delta: f64, rho_adv: f64, rho_dec: f64) -> Result<f64> {
    check_variances(rho_delta, rho_adv, rho_dec)?;
    if !(0.0..=1.0).contains(&a) {
        return domain(format!("level {a} outside [0, 1]"));
    }
    Ok(tau_star_raw(a, rho_delta, rho_adv, rho_dec))
}

pub(crate) fn tau_star_raw(a: f64, rho_delta: f64, rho_adv: f64, rho_dec: f64) -> f64 {
    let inj = a * a * rho_delta;
    let residual = if inj + rho_adv == 0.0 {
        0.0
    } else {
        inj * rho_adv / (inj + rho_adv)
    };
    residual + rho_dec
}

/// The detection margin and where it is attained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaValue {
    pub lambda: f64,
    /// Index into `K` of the level attaining the minimum.
    pub argmin: usize,
    /// Unclamped per-level margins `1 − (1+δ)(k²ρ_Δ+ρ_Dec)/(γτ*(k)+(1−γ)τ*(d_k))`.
    pub margins: Vec<f64>,
}

/// `λ = max(0, min_k margin_k)`.
pub fn lambda_value(
    level_set: &LevelSet,
    gamma: f64,
    delta: f64,
    rho_delta: f64,
    rho_adv: f64,
    rho_dec: f64,
) -> Result<LambdaValue> {
    check_variances(rho_delta, rho_adv, rho_dec)?;
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("gamma {gamma} outside (0, 1)"));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return domain(format!("delta {delta} must be non-negative"));
    }
    let margins: Vec<f64> = (0..level_set.len())
        .map(|i| {
            let k = level_set.value(i);
            let d = level_set.next_value(i);
            let mixed = gamma * tau_star_raw(k, rho_delta, rho_adv, rho_dec)
                + (1.0 - gamma) * tau_star_raw(d, rho_delta, rho_adv, rho_dec);
            1.0 - (1.0 + delta) * (k * k * rho_delta + rho_dec) / mixed
        })
        .collect();
    let (argmin, min) = margins
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, m)| if m < acc.1 { (i, m) } else { acc });
    Ok(LambdaValue {
        lambda: min.max(0.0),
        argmin,
        margins,
    })
}

/// `e^{−ℓ(1−γ)λ²/8} + e^{−ℓγλ²/8}`.
pub fn alpha_star_bound(ell: usize, gamma: f64, lambda: f64) -> f64 {
    let l = ell as f64 * lambda * lambda / 8.0;
    (-(1.0 - gamma) * l).exp() + (-gamma * l).exp()
}

/// `ω_H + 2√(2ω_Hρ_Δ(r_H+1)) + ρ_Δ(1 + m[r_H + 1 + ln|K|/n])` with
/// multiplier `m = 8|K̃|`, or `m = 8|K| + 1` when `alt` is set.
pub fn injection_power_bound(omega_h: f64, r_h: f64, rho_delta: f64, k_len: usize, n: usize, alt: bool) -> f64 {
    let k = k_len as f64;
    let multiplier = if alt { 8.0 * k + 1.0 } else { 8.0 * (k + 1.0) };
    let bracket = r_h + 1.0 + k.ln() / n as f64;
    omega_h + 2.0 * (2.0 * omega_h * rho_delta * (r_h + 1.0)).sqrt() + rho_delta * (1.0 + multiplier * bracket)
}

/// Everything the noise-injection modification's guarantees depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub n: usize,
    pub level_set: LevelSet,
    pub gamma: f64,
    /// Base-code power `ω_H`.
    pub omega_h: f64,
    /// Base-code rate `r_H` in nats.
    pub r_h: f64,
    /// Base-code error probability at noise variance `ρ_Dec + ρ_Δ`.
    pub eps_h: f64,
    pub rho_delta: f64,
    pub delta: f64,
    pub rho_adv: f64,
    pub rho_dec: f64,
}

impl BoundInputs {
    fn validate(&self) -> Result<()> {
        check_variances(self.rho_delta, self.rho_adv, self.rho_dec)?;
        if self.n < self.level_set.extended_len() {
            return domain("block length shorter than |K~|");
        }
        if !(self.gamma > 0.5 && self.gamma < 1.0) {
            return domain(format!("gamma must lie in the open interval (1/2, 1), got {}", self.gamma));
        }
        if !(self.omega_h >= 0.0 && self.r_h >= 0.0 && (0.0..=1.0).contains(&self.eps_h)) {
            return domain("base-code statistics out of range");
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return domain(format!("delta {} must be non-negative", self.delta));
        }
        Ok(())
    }

    pub fn ell(&self) -> usize {
        self.level_set.ell(self.n)
    }
}

/// Guarantees of the noise-injection modification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionBounds {
    pub lambda: f64,
    pub argmin_level: f64,
    pub ell: usize,
    pub levels: Vec<f64>,
    pub d_k: Vec<f64>,
    pub tau_star: Vec<f64>,
    pub tau_star_next: Vec<f64>,
    /// `ω_H + 2√(2ω_Hρ_Δ(r_H+1)) + ρ_Δ(1 + 8|K̃|[r_H + 1 + ln|K|/n])`.
    pub power_bound: f64,
    /// Same with the factor `(8|K| + 1)` in place of `8|K̃|`.
    pub power_bound_alt: f64,
    /// `ω_H + ρ_Δ`, the power when no offsets are injected.
    pub power_bound_zero_t: f64,
    /// `ε_H(ρ_Dec+ρ_Δ) + √((n/2)e^{−n r_H}) + |K|e^{−ℓδ²/8}`.
    pub epsilon_bound: f64,
    /// Same with `√(2n e^{−n r_H})`.
    pub epsilon_bound_alt: f64,
    /// `|K|e^{−ℓδ²/8}`, the detector's false-alarm allowance.
    pub false_alarm_term: f64,
    pub alpha_star_bound: f64,
    pub alpha_star_vacuous: bool,
}

pub fn injection_bounds(inputs: &BoundInputs) -> Result<InjectionBounds> {
    inputs.validate()?;
    let BoundInputs {
        n,
        ref level_set,
        gamma,
        omega_h,
        r_h,
        eps_h,
        rho_delta,
        delta,
        rho_adv,
        rho_dec,
    } = *inputs;
    let lv = lambda_value(level_set, gamma, delta, rho_delta, rho_adv, rho_dec)?;
    let ell = level_set.ell(n);
    let nf = n as f64;
    let k_len = level_set.len() as f64;
    let levels = level_set.levels().to_vec();
    let d_k: Vec<f64> = (0..level_set.len()).map(|i| level_set.next_value(i)).collect();
    let tau = |a: f64| tau_star_raw(a, rho_delta, rho_adv, rho_dec);

    let false_alarm_term = k_len * (-(ell as f64) * delta * delta / 8.0).exp();
    let alpha = alpha_star_bound(ell, gamma, lv.lambda);
    Ok(InjectionBounds {
        lambda: lv.lambda,
        argmin_level: level_set.value(lv.argmin),
        ell,
        tau_star: levels.iter().map(|&k| tau(k)).collect(),
        tau_star_next: d_k.iter().map(|&d| tau(d)).collect(),
        levels,
        d_k,
        power_bound: injection_power_bound(omega_h, r_h, rho_delta, level_set.len(), n, false),
        power_bound_alt: injection_power_bound(omega_h, r_h, rho_delta, level_set.len(), n, true),
        power_bound_zero_t: omega_h + rho_delta,
        epsilon_bound: eps_h + (nf / 2.0 * (-nf * r_h).exp()).sqrt() + false_alarm_term,
        epsilon_bound_alt: eps_h + (2.0 * nf * (-nf * r_h).exp()).sqrt() + false_alarm_term,
        false_alarm_term,
        alpha_star_bound: alpha,
        alpha_star_vacuous: alpha >= 1.0,
    })
}

/// `θ = max(1, √(3n[ω + (ρ_Δ+ρ_Dec)(1+δ+2λ²+2r)]))`.
pub fn theta(n: usize, omega: f64, rho_delta: f64, rho_dec: f64, delta: f64, lambda: f64, r: f64) -> f64 {
    let inner = 3.0 * n as f64 * (omega + (rho_delta + rho_dec) * (1.0 + delta + 2.0 * lambda * lambda + 2.0 * r));
    inner.sqrt().max(1.0)
}

/// The decimated rate and its three contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RDaggerTerms {
    /// `(1 − 1/n) r_H`.
    pub base: f64,
    /// `((1−γ)ℓ/(4n)) λ²`.
    pub margin: f64,
    /// `(2 + ln 2θ)/n`.
    pub log: f64,
    /// `base − margin − log`.
    pub value: f64,
}

impl std::fmt::Display for RDaggerTerms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "r = {:.6} (base {:.6} − margin {:.6} − log {:.6})",
            self.value, self.base, self.margin, self.log
        )
    }
}

pub fn r_ddagger(n: usize, r_h: f64, gamma: f64, ell: usize, lambda: f64, theta: f64) -> RDaggerTerms {
    let nf = n as f64;
    let base = (1.0 - 1.0 / nf) * r_h;
    let margin = (1.0 - gamma) * ell as f64 / (4.0 * nf) * lambda * lambda;
    let log = (2.0 + (2.0 * theta).ln()) / nf;
    RDaggerTerms {
        base,
        margin,
        log,
        value: base - margin - log,
    }
}

/// `r_H − ((1−γ)ℓ/(4n))λ² − (r_H + 2 + ln 4nθ)/n`.
pub fn decimated_rate_bound(n: usize, r_h: f64, gamma: f64, ell: usize, lambda: f64, theta: f64) -> f64 {
    let nf = n as f64;
    r_h - (1.0 - gamma) * ell as f64 / (4.0 * nf) * lambda * lambda - (r_h + 2.0 + (4.0 * nf * theta).ln()) / nf
}

/// `(2n + 1/(2√(nρ_Dec))) e^{−(1−γ)ℓλ²/8}`.
pub fn decimated_alpha_bound(n: usize, gamma: f64, ell: usize, lambda: f64, rho_dec: f64) -> f64 {
    let nf = n as f64;
    (2.0 * nf + 1.0 / (2.0 * (nf * rho_dec).sqrt())) * (-(1.0 - gamma) * ell as f64 * lambda * lambda / 8.0).exp()
}

/// Guarantees after decimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimationBounds {
    pub lambda: f64,
    pub theta: f64,
    pub r_ddagger: RDaggerTerms,
    pub rate_bound: f64,
    pub alpha_bound: f64,
    pub alpha_vacuous: bool,
    /// `(n − 1) r_H`.
    pub precondition_lhs: f64,
    /// `(1−γ)ℓλ²/4 + 2 + ln 4nθ`.
    pub precondition_rhs: f64,
    pub feasible: bool,
}

/// Decimation bounds. With `adversary_agnostic` the margin is taken as
/// `λ = 0`, which decimates at least as much as needed for any `ρ_Adv`.
pub fn decimation_bounds(inputs: &BoundInputs, adversary_agnostic: bool) -> Result<DecimationBounds> {
    inputs.validate()?;
    let lambda = if adversary_agnostic {
        0.0
    } else {
        lambda_value(
            &inputs.level_set,
            inputs.gamma,
            inputs.delta,
            inputs.rho_delta,
            inputs.rho_adv,
            inputs.rho_dec,
        )?
        .lambda
    };
    let n = inputs.n;
    let ell = inputs.ell();
    let th = theta(n, inputs.omega_h, inputs.rho_delta, inputs.rho_dec, inputs.delta, lambda, inputs.r_h);
    let terms = r_ddagger(n, inputs.r_h, inputs.gamma, ell, lambda, th);
    let alpha = decimated_alpha_bound(n, inputs.gamma, ell, lambda, inputs.rho_dec);
    let lhs = (n as f64 - 1.0) * inputs.r_h;
    let rhs = (1.0 - inputs.gamma) * ell as f64 * lambda * lambda / 4.0 + 2.0 + (4.0 * n as f64 * th).ln();
    Ok(DecimationBounds {
        lambda,
        theta: th,
        r_ddagger: terms,
        rate_bound: decimated_rate_bound(n, inputs.r_h, inputs.gamma, ell, lambda, th),
        alpha_bound: alpha,
        alpha_vacuous: alpha >= 1.0,
        precondition_lhs: lhs,
        precondition_rhs: rhs,
        feasible: lhs >= rhs && terms.value > 0.0,
    })
}

/// Authenticated capacity: `½ ln(1 + ρ/ρ_Dec)` when `ρ_Adv > 0`, else `0`.
pub fn capacity(rho: f64, rho_dec: f64, rho_adv: f64) -> Result<Nats> {
    if !(rho >= 0.0 && rho_dec > 0.0 && rho_adv >= 0.0) {
        return domain("capacity needs ρ ≥ 0, ρ_Dec > 0, ρ_Adv ≥ 0");
    }
    if rho_adv > 0.0 {
        Ok(Nats(0.5 * (rho / rho_dec).ln_1p()))
    } else {
        Ok(Nats(0.0))
    }
}

/// Capacity lost by spending `ρ_Δ` of the power budget on injected noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateGap {
    /// `½ln(1+ρ/ρ_Dec) − ½ln(1+(ρ−ρ_Δ)/(ρ_Dec+ρ_Δ))`.
    pub exact: f64,
    /// `Σ_i (cρ_Δ)^i / i = −ln(1 − cρ_Δ)`.
    pub series: f64,
    pub c: f64,
}

pub fn rate_gap(rho: f64, rho_dec: f64, rho_delta: f64) -> Result<RateGap> {
    if !(rho > 0.0 && rho_dec > 0.0 && rho_delta > 0.0) {
        return domain("rate gap needs positive ρ, ρ_Dec and ρ_Δ");
    }
    if rho_delta >= rho {
        return domain(format!("injection power {rho_delta} must be below the budget {rho}"));
    }
    let exact = 0.5 * (rho / rho_dec).ln_1p() - 0.5 * ((rho - rho_delta) / (rho_dec + rho_delta)).ln_1p();
    let c = (rho + rho_dec) / (rho + rho_dec + rho_delta * (1.0 + rho / rho_dec));
    Ok(RateGap {
        exact,
        series: -(-c * rho_delta).ln_1p(),
        c,
    })
}

/// Heuristic level set for small injection power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalLevels {
    pub c: f64,
    /// `k_(1), …, k_(|K|−1)`; the set is `{0} ∪` these.
    pub values: Vec<f64>,
    /// Indices into `values` that fall outside `[0, 1)` or break ordering.
    pub invalid: Vec<usize>,
    /// The level set, when every value is admissible.
    pub level_set: Option<LevelSet>,
    /// `exp(−(1−γ)[1−(1+δ)c]²/8)`, evaluated as stated (without `ℓ`).
    pub predicted_pfa: f64,
    /// The same exponent multiplied by `ℓ`, when `ℓ` is given.
    pub predicted_pfa_scaled: Option<f64>,
}

/// `k_(a) = [(1−cγ)/(c(1−γ))]^{a−1} ρ_Dec/ρ_Δ` with
/// `c = ρ_Dec^{1/|K|} / (γρ_Dec^{1/|K|} + (1−γ)(ρ_Δ+ρ_Dec)^{1/|K|})`.
pub fn optimal_levels(
    count: usize,
    gamma: f64,
    delta: f64,
    rho_delta: f64,
    rho_dec: f64,
    ell: Option<usize>,
) -> Result<OptimalLevels> {
    if count == 0 {
        return domain("level count must be at least 1");
    }
    if !(gamma > 0.5 && gamma < 1.0) {
        return domain(format!("gamma must lie in the open interval (1/2, 1), got {gamma}"));
    }
    if !(rho_delta > 0.0 && rho_dec > 0.0) {
        return domain("ρ_Δ and ρ_Dec must be positive");
    }
    let p = 1.0 / count as f64;
    let root_dec = rho_dec.powf(p);
    let c = root_dec / (gamma * root_dec + (1.0 - gamma) * (rho_delta + rho_dec).powf(p));
    let ratio = (1.0 - c * gamma) / (c * (1.0 - gamma));
    let values: Vec<f64> = (1..count)
        .map(|a| ratio.powi(a as i32 - 1) * rho_dec / rho_delta)
        .collect();
    let mut prev = 0.0;
    let invalid: Vec<usize> = values
        .iter()
        .enumerate()
        .filter_map(|(i, &v)| {
            let bad = !(v > prev && v < 1.0);
            prev = prev.max(v);
            bad.then_some(i)
        })
        .collect();
    let level_set = if invalid.is_empty() {
        let mut levels = vec![0.0];
        levels.extend(&values);
        Some(LevelSet::new(levels)?)
    } else {
        None
    };
    let exponent = (1.0 - gamma) * (1.0 - (1.0 + delta) * c).powi(2) / 8.0;
    Ok(OptimalLevels {
        c,
        values,
        invalid,
        level_set,
        predicted_pfa: (-exponent).exp(),
        predicted_pfa_scaled: ell.map(|l| (-(l as f64) * exponent).exp()),
    })
}

/// Lower bound on the information of a hypergeometric overlap together
/// with the exact value it bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HypergeomBound {
    /// `a·I2(c/b || b/a) − 1/3 − 2 ln a`.
    pub bound: f64,
    /// `−ln[C(b,c) C(a−b,b−c) / C(a,b)]`.
    pub exact: f64,
}

pub fn hypergeom_log_bound(a: u64, b: u64, c: u64) -> Result<HypergeomBound> {
    if !(a > b && b > c && c >= 1 && 2 * b <= a + c) {
        return domain(format!("need a > b > c ≥ max(2b − a, 1), got ({a}, {b}, {c})"));
    }
    let (af, bf, cf) = (a as f64, b as f64, c as f64);
    let bound = af * i2_raw(cf / bf, bf / af) - 1.0 / 3.0 - 2.0 * af.ln();
    let exact = -(ln_binomial(b, c) + ln_binomial(a - b, b - c) - ln_binomial(a, b));
    Ok(HypergeomBound { bound, exact })
}

/// Tail bounds for the mean of a sample drawn without replacement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoeffdingBounds {
    /// `exp(−β D2(cμ || μ))`.
    pub divergence: Probability,
    /// `exp(−2β[(c−1)μ]²)`, the quadratic relaxation.
    pub quadratic: Probability,
    /// `exp(−β D2(cμ/η || μ/η))` when every weight is at most `η < 1`.
    pub scaled_divergence: Option<Probability>,
}

/// Bounds on `Pr(Σ_{a∈B} p(a) ≥ cμβ)` for a uniform `β`-subset `B` of a set
/// of size `abs_size` with mean weight `μ` and maximum weight `η`.
pub fn hoeffding_wo_replacement_bound(abs_size: usize, beta: usize, mu: f64, eta: f64, c: f64) -> Result<HoeffdingBounds> {
    if !(beta >= 1 && beta < abs_size) {
        return domain(format!("sample size {beta} must lie in [1, {abs_size})"));
    }
    if !(mu > 0.0 && mu <= eta && eta <= 1.0) {
        return domain(format!("need 0 < μ ≤ η ≤ 1, got μ = {mu}, η = {eta}"));
    }
    if !(c > 1.0 && c < eta / mu) {
        return domain(format!("c = {c} must lie in (1, η/μ) = (1, {})", eta / mu));
    }
    let bf = beta as f64;
    let divergence = Probability::new((-bf * d2_raw(c * mu, mu)).exp())?;
    let quadratic = Probability::new((-2.0 * bf * ((c - 1.0) * mu).powi(2)).exp())?;
    let scaled_divergence = if eta < 1.0 {
        Some(Probability::new((-bf * d2_raw(c * mu / eta, mu / eta)).exp())?)
    } else {
        None
    };
    Ok(HoeffdingBounds {
        divergence,
        quadratic,
        scaled_divergence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedVarianceBound {
    pub lambda: f64,
    pub bound: f64,
    pub vacuous: bool,
}

/// Lower-tail bound for `Σ G²_{τ_i}` against `n(1+c)b` when a `γ` fraction
/// of the variances lies in `[α, β)` and the rest are at least `β`:
/// `e^{−nγλ²/8} + e^{−n(1−γ)λ²/8}` with
/// `λ = max(0, 1 − (1+c)b/(γα + (1−γ)β))`.
pub fn mixed_variance_bound(tau: &[f64], alpha: f64, beta: f64, gamma_frac: f64, b: f64, c: f64) -> Result<MixedVarianceBound> {
    if tau.is_empty() {
        return domain("variance vector is empty");
    }
    if !(alpha > 0.0 && beta >= alpha) {
        return domain(format!("need β ≥ α > 0, got α = {alpha}, β = {beta}"));
    }
    if let Some(t) = tau.iter().find(|t| !(**t >= alpha)) {
        return domain(format!("variance {t} is below α = {alpha}"));
    }
    if !(gamma_frac > 0.0 && gamma_frac < 1.0) {
        return domain(format!("fraction {gamma_frac} outside (0, 1)"));
    }
    let below = tau.iter().filter(|t| **t < beta).count() as f64 / tau.len() as f64;
    if gamma_frac > below {
        return domain(format!(
            "γ = {gamma_frac} exceeds the fraction {below} of variances below β"
        ));
    }
    if !(b > 0.0 && c >= 0.0) {
        return domain("need b > 0 and c ≥ 0");
    }
    let n = tau.len() as f64;
    let lambda = (1.0 - (1.0 + c) * b / (gamma_frac * alpha + (1.0 - gamma_frac) * beta)).max(0.0);
    let bound = (-n * gamma_frac * lambda * lambda / 8.0).exp() + (-n * (1.0 - gamma_frac) * lambda * lambda / 8.0).exp();
    Ok(MixedVarianceBound {
        lambda,
        bound,
        vacuous: bound >= 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k0() -> LevelSet {
        LevelSet::new(vec![0.0]).unwrap()
    }

    #[test]
    fn tau_star_examples() {
        assert_eq!(tau_star(0.0, 1.0, 1.0, 0.1).unwrap(), 0.1);
        assert_abs_diff_eq!(tau_star(1.0, 1.0, 1.0, 0.1).unwrap(), 0.6, epsilon = 1e-15);
        for a in [0.0, 0.3, 1.0] {
            assert_eq!(tau_star(a, 1.0, 0.0, 0.2).unwrap(), 0.2);
        }
        assert!(tau_star(0.5, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn lambda_examples() {
        let lv = lambda_value(&k0(), 0.75, 0.0, 1.0, 0.1, 0.1).unwrap();
        assert_abs_diff_eq!(lv.lambda, 0.185_185_185_185_185_23, epsilon = 1e-12);
        assert_abs_diff_eq!(tau_star(1.0, 1.0, 0.1, 0.1).unwrap(), 0.190_909_090_909_090_92, epsilon = 1e-15);
        assert_eq!(lambda_value(&k0(), 0.75, 0.2, 1.0, 0.0, 0.1).unwrap().lambda, 0.0);
        assert_eq!(lambda_value(&k0(), 0.75, 5.0, 1.0, 0.1, 0.1).unwrap().lambda, 0.0);
    }

    fn inputs(n: usize, delta: f64) -> BoundInputs {
        BoundInputs {
            n,
            level_set: k0(),
            gamma: 0.75,
            omega_h: 1.0,
            r_h: 0.5,
            eps_h: 0.0,
            rho_delta: 1.0,
            delta,
            rho_adv: 0.1,
            rho_dec: 0.1,
        }
    }

    #[test]
    fn alpha_star_examples() {
        assert_eq!(alpha_star_bound(1000, 0.75, 0.0), 2.0);
        assert_abs_diff_eq!(alpha_star_bound(1000, 0.75, 0.185_185_185_185_185_23), 0.382_589_471_612_832_3, epsilon = 1e-12);
        let b = injection_bounds(&inputs(4000, 0.0)).unwrap();
        assert_eq!(b.ell, 2000);
        assert_abs_diff_eq!(b.alpha_star_bound, 0.118_874_089_064_698_12, epsilon = 1e-12);
        assert!(!b.alpha_star_vacuous);
        let b6 = injection_bounds(&inputs(4000, 1e-6)).unwrap();
        assert_abs_diff_eq!(b6.alpha_star_bound, 0.118_876_392_045_070_67, epsilon = 1e-12);
    }

    #[test]
    fn power_bound_vanishes_with_injection() {
        let mut i = inputs(1000, 0.2);
        i.rho_delta = 1e-14;
        let b = injection_bounds(&i).unwrap();
        assert_abs_diff_eq!(b.power_bound, 1.0, epsilon = 1e-5);
        assert_abs_diff_eq!(b.power_bound_zero_t, 1.0, epsilon = 1e-12);
        assert!(b.power_bound_alt <= b.power_bound);
    }

    #[test]
    fn epsilon_bound_structure() {
        let b = injection_bounds(&inputs(2000, 0.2)).unwrap();
        assert_abs_diff_eq!(b.false_alarm_term, (-5.0f64).exp(), epsilon = 1e-15);
        let short = injection_bounds(&inputs(20, 0.2)).unwrap();
        assert!(short.epsilon_bound_alt > short.epsilon_bound);
        assert_abs_diff_eq!(short.epsilon_bound - short.false_alarm_term, (10.0 * (-10.0f64).exp()).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn decimation_rate_examples() {
        let t = r_ddagger(1000, 0.5, 0.75, 500, 0.0, 100.0);
        assert_abs_diff_eq!(t.value, 0.492_201_682_633_452, epsilon = 1e-12);
        assert_abs_diff_eq!(decimated_rate_bound(1000, 0.5, 0.75, 500, 0.0, 100.0), 0.484_600_780_173_909_9, epsilon = 1e-12);
        let a0 = decimated_alpha_bound(1000, 0.75, 500, 0.0, 0.1);
        assert_abs_diff_eq!(a0, 2000.0 + 1.0 / (2.0 * 10.0), epsilon = 1e-12);
        assert_eq!(theta(1, 0.0, 1e-9, 1e-9, 0.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn decimation_flags_infeasible_rate() {
        let b = decimation_bounds(&inputs(8, 0.2), false).unwrap();
        assert!(!b.feasible);
        let ok = decimation_bounds(&inputs(4000, 0.2), true).unwrap();
        assert_eq!(ok.lambda, 0.0);
        assert!(ok.feasible);
        assert!(ok.alpha_vacuous);
    }

    #[test]
    fn capacity_examples() {
        assert_abs_diff_eq!(capacity(1.0, 1.0, 0.5).unwrap().value(), 0.346_573_590_279_972_64, epsilon = 1e-15);
        assert_eq!(capacity(3.0, 0.2, 0.0).unwrap().value(), 0.0);
        assert_eq!(capacity(0.0, 0.2, 1.0).unwrap().value(), 0.0);
    }

    #[test]
    fn rate_gap_examples() {
        let g = rate_gap(1.0, 1.0, 0.1).unwrap();
        assert_abs_diff_eq!(g.exact, 0.047_655_089_902_162_47, epsilon = 1e-12);
        assert_abs_diff_eq!(g.series, 0.095_310_179_804_324_9, epsilon = 1e-12);
        assert_abs_diff_eq!(rate_gap(5.0, 1.0, 0.1).unwrap().exact, g.exact, epsilon = 1e-12);
        assert!(rate_gap(1.0, 1.0, 1e-12).unwrap().exact < 1e-11);
        assert!(rate_gap(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn optimal_levels_examples() {
        let o = optimal_levels(2, 0.75, 0.2, 1.0, 0.01, Some(1000)).unwrap();
        assert_abs_diff_eq!(o.c, 0.306_516_331_353_082_2, epsilon = 1e-12);
        assert_abs_diff_eq!(o.values[0], 0.01, epsilon = 1e-15);
        assert_eq!(o.level_set.unwrap().levels(), &[0.0, 0.01]);
        assert_abs_diff_eq!(o.predicted_pfa, 0.987_588_538_573_681_6, epsilon = 1e-12);
        assert!(o.predicted_pfa_scaled.unwrap() < o.predicted_pfa);
        let third = optimal_levels(3, 0.75, 0.2, 1.0, 0.01, None).unwrap();
        assert_abs_diff_eq!(third.values[0], 0.01, epsilon = 1e-15);
        let flagged = optimal_levels(2, 0.75, 0.2, 0.5, 0.5, None).unwrap();
        assert_eq!(flagged.values, vec![1.0]);
        assert_eq!(flagged.invalid, vec![0]);
        assert!(flagged.level_set.is_none());
    }

    #[test]
    fn hypergeom_example_and_domain() {
        let h = hypergeom_log_bound(10, 4, 3).unwrap();
        assert_abs_diff_eq!(h.exact, 2.169_053_700_369_522, epsilon = 1e-10);
        assert_abs_diff_eq!(h.bound, -3.161_094_680_901_922, epsilon = 1e-10);
        assert!(hypergeom_log_bound(10, 4, 4).is_err());
        assert!(hypergeom_log_bound(6, 4, 1).is_err());
    }

    #[test]
    fn hoeffding_example() {
        let h = hoeffding_wo_replacement_bound(4, 2, 0.25, 1.0, 2.0).unwrap();
        assert_abs_diff_eq!(h.divergence.value(), 0.75, epsilon = 1e-12);
        assert!(h.scaled_divergence.is_none());
        assert!(h.quadratic.value() >= h.divergence.value());
        let near = hoeffding_wo_replacement_bound(100, 10, 0.2, 0.5, 1.0 + 1e-9).unwrap();
        assert!(near.divergence.value() > 1.0 - 1e-9);
        assert!(hoeffding_wo_replacement_bound(4, 4, 0.25, 1.0, 2.0).is_err());
        assert!(hoeffding_wo_replacement_bound(4, 2, 0.25, 0.5, 2.0).is_err());
    }

    #[test]
    fn mixed_variance_examples() {
        let mut tau = vec![0.1; 1500];
        tau.extend(vec![0.19; 500]);
        let b = mixed_variance_bound(&tau, 0.1, 0.19, 0.75, 0.1, 0.0).unwrap();
        assert_abs_diff_eq!(b.lambda, 0.183_673_469_387_755_08, epsilon = 1e-12);
        assert_abs_diff_eq!(b.bound, 0.123_210_479_697_580_37, epsilon = 1e-12);
        let alternating: Vec<f64> = (0..2000).map(|i| if i % 2 == 0 { 0.1 } else { 0.19 }).collect();
        assert!(mixed_variance_bound(&alternating, 0.1, 0.19, 0.75, 0.1, 0.0).is_err());
        let vac = mixed_variance_bound(&tau, 0.1, 0.19, 0.75, 1.0, 0.0).unwrap();
        assert_eq!(vac.bound, 2.0);
    }

    proptest! {
        #[test]
        fn alpha_star_bound_monotone(ell in 1usize..5000, lambda in 0.0f64..1.0, gamma in 0.51f64..0.99) {
            let b = alpha_star_bound(ell, gamma, lambda);
            prop_assert!(alpha_star_bound(ell + 1, gamma, lambda) <= b);
            prop_assert!(alpha_star_bound(ell, gamma, (lambda + 0.01).min(1.0)) <= b);
        }

        #[test]
        fn tau_star_increasing_in_level(a in 0.0f64..0.99, rd in 0.01f64..10.0, ra in 0.01f64..10.0, rdec in 0.01f64..1.0) {
            prop_assert!(tau_star(a, rd, ra, rdec).unwrap() <= tau_star(a + 0.01, rd, ra, rdec).unwrap());
        }

        #[test]
        fn capacity_monotone(rho in 0.0f64..10.0, rdec in 0.01f64..5.0, radv in 0.001f64..5.0) {
            let c = capacity(rho, rdec, radv).unwrap().value();
            prop_assert!(capacity(rho + 0.1, rdec, radv).unwrap().value() > c);
            prop_assert!(capacity(rho, rdec + 0.1, radv).unwrap().value() <= c);
        }

        #[test]
        fn lambda_in_unit_interval(delta in 0.0f64..1.0, rd in 0.01f64..10.0, ra in 0.0f64..10.0, rdec in 0.01f64..1.0, g in 0.51f64..0.99) {
            let ls = LevelSet::new(vec![0.0, 0.25, 0.5]).unwrap();
            let l = lambda_value(&ls, g, delta, rd, ra, rdec).unwrap().lambda;
            prop_assert!((0.0..1.0).contains(&l));
        }
    }
}
