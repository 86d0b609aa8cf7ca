//! Overlay codes: per-message assignments of injected-noise levels to
//! codeword coordinates.
//!
//! A code over block length `n` with level set `K ⊂ [0, 1)` gives every
//! message exactly `ℓ = ⌊n / (|K| + 1)⌋` coordinates at each level of `K`;
//! the remaining coordinates sit at the full level `1`. Distinct messages
//! must be separated: for every ordered pair `(m, m')` some level `k` has
//! at most `γℓ` shared level-`k` coordinates, and none of `m`'s level-`k`
//! coordinates is assigned a lower level by `m'`.
//!
//! Internally coordinates are 0-based and a coordinate's level is stored as
//! an index into `K`, with index `|K|` standing for level `1`. The JSON form
//! uses 1-based coordinates.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::{h2_raw, i2_raw, ln_binomial, Nats};
use crate::rng::{stream, StreamRole};

/// The finite set `K ⊂ [0, 1)` of fractional noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LevelSet {
    levels: Vec<f64>,
}

impl TryFrom<Vec<f64>> for LevelSet {
    type Error = Error;

    fn try_from(levels: Vec<f64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<LevelSet> for Vec<f64> {
    fn from(ls: LevelSet) -> Self {
        ls.levels
    }
}

impl LevelSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return domain("level set must be nonempty");
        }
        if levels.len() > u8::MAX as usize - 1 {
            return domain("at most 254 levels are supported");
        }
        if let Some(k) = levels.iter().find(|k| !(**k >= 0.0 && **k < 1.0)) {
            return domain(format!("levels must lie in [0,1), got {k}"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return domain("levels must be strictly increasing");
        }
        Ok(Self { levels })
    }

    /// `{0, 1/L, …, 1 − 1/L}` for an extended size `L = |K| + 1`.
    pub fn uniform(extended_len: usize) -> Result<Self> {
        if extended_len < 2 {
            return domain("uniform level set needs |K~| >= 2");
        }
        Self::new(
            (0..extended_len - 1)
                .map(|i| i as f64 / extended_len as f64)
                .collect(),
        )
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    /// `|K|`.
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `|K̃| = |K| + 1`.
    pub fn extended_len(&self) -> usize {
        self.levels.len() + 1
    }

    /// Level value for an index; `len()` maps to the full level `1`.
    pub fn value(&self, index: usize) -> f64 {
        if index == self.levels.len() {
            1.0
        } else {
            self.levels[index]
        }
    }

    /// `d_k = min{d ∈ K̃ : d > k}` for the level at `index`.
    pub fn next_value(&self, index: usize) -> f64 {
        self.value(index + 1)
    }

    /// `ℓ = ⌊n / |K̃|⌋`.
    pub fn ell(&self, n: usize) -> usize {
        n / self.extended_len()
    }

    /// `n_k = n − ℓ·|{j ∈ K : j < k}|` for every level, ascending.
    pub fn pool_sizes(&self, n: usize) -> Vec<usize> {
        let ell = self.ell(n);
        (0..self.len()).map(|j| n - ell * j).collect()
    }

    pub fn index_of(&self, value: f64) -> Option<usize> {
        if (value - 1.0).abs() < 1e-12 {
            return Some(self.len());
        }
        self.levels.iter().position(|k| (k - value).abs() < 1e-12)
    }
}

/// Constant subtracted per level in the achievable overlay rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefectTerm {
    /// `4/(3 n_k)`, used by the existence argument.
    #[default]
    Existence,
    /// `1/(3 n_k)`, as in the randomized construction.
    Construction,
}

impl DefectTerm {
    fn numerator(self) -> f64 {
        match self {
            DefectTerm::Existence => 4.0 / 3.0,
            DefectTerm::Construction => 1.0 / 3.0,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.5 && gamma < 1.0 {
        Ok(())
    } else {
        domain(format!("gamma must lie in the open interval (1/2, 1), got {gamma}"))
    }
}

fn check_blocklength(n: usize, level_set: &LevelSet) -> Result<()> {
    if n < level_set.extended_len() {
        return domain(format!(
            "block length {n} is smaller than |K~| = {}",
            level_set.extended_len()
        ));
    }
    Ok(())
}

/// Per-level log message counts `n_k |I2(γ || ℓ/n_k) − d/n_k − (2/n_k) ln(n_k √ℓ)|⁺`.
pub fn design_log_counts(
    n: usize,
    level_set: &LevelSet,
    gamma: f64,
    defect: DefectTerm,
) -> Result<Vec<f64>> {
    check_gamma(gamma)?;
    check_blocklength(n, level_set)?;
    let ell = level_set.ell(n) as f64;
    Ok(level_set
        .pool_sizes(n)
        .into_iter()
        .map(|nk| {
            let nk = nk as f64;
            let raw = nk * i2_raw(gamma, ell / nk)
                - defect.numerator()
                - 2.0 * (nk * ell.sqrt()).ln();
            raw.max(0.0)
        })
        .collect())
}

/// Overlay rate guaranteed achievable at block length `n` with the chosen
/// defect term, in nats per symbol.
pub fn overlay_rate_bound(
    n: usize,
    level_set: &LevelSet,
    gamma: f64,
    defect: DefectTerm,
) -> Result<Nats> {
    let total: f64 = design_log_counts(n, level_set, gamma, defect)?.iter().sum();
    Ok(Nats(total / n as f64))
}

/// Finite-`n` achievable overlay rate with the `4/(3 n_k)` defect.
pub fn overlay_rate_existence(n: usize, level_set: &LevelSet, gamma: f64) -> Result<Nats> {
    overlay_rate_bound(n, level_set, gamma, DefectTerm::Existence)
}

/// Large-`n` overlay rate `γ ln|K̃| − γ − H2(γ)`, clamped at zero.
pub fn overlay_rate_asymptotic(extended_len: usize, gamma: f64) -> Result<Nats> {
    check_gamma(gamma)?;
    if extended_len < 2 {
        return domain("|K~| must be at least 2");
    }
    let raw = gamma * (extended_len as f64).ln() - gamma - h2_raw(gamma);
    Ok(Nats(raw.max(0.0)))
}

/// Image of `subset` under the order-preserving bijection from `source` onto
/// `target`; all three are sorted index sets.
pub fn order_preserving_map(source: &[usize], target: &[usize], subset: &[usize]) -> Result<Vec<usize>> {
    if source.len() != target.len() {
        return Err(Error::Mismatch(format!(
            "source has {} elements, target {}",
            source.len(),
            target.len()
        )));
    }
    subset
        .iter()
        .map(|s| {
            source
                .binary_search(s)
                .map(|pos| target[pos])
                .map_err(|_| Error::Domain(format!("{s} is not in the source set")))
        })
        .collect()
}

/// Randomly selected `ℓ`-subsets, one table per level of `K`. Entry
/// `tables[k][m_k]` is a sorted subset of `{0, …, n_k − 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTables {
    pub tables: Vec<Vec<Vec<usize>>>,
}

impl SubsetTables {
    /// Builds tables from 1-based subsets.
    pub fn from_one_based(tables: Vec<Vec<Vec<usize>>>) -> Result<Self> {
        let tables = tables
            .into_iter()
            .map(|level| {
                level
                    .into_iter()
                    .map(|s| {
                        let mut s: Vec<usize> = s
                            .into_iter()
                            .map(|i| i.checked_sub(1).ok_or_else(|| Error::Domain("index 0 in 1-based subset".into())))
                            .collect::<Result<_>>()?;
                        s.sort_unstable();
                        Ok(s)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { tables })
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.tables.iter().map(Vec::len).collect()
    }
}

/// Where a constructed overlay code came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Realized `|M_k|` per level.
    pub level_counts: Vec<usize>,
    /// `ln |M_k|` implied by the requested rates before capping.
    pub design_log_counts: Vec<f64>,
    /// Number of sampling attempts consumed.
    pub attempts: usize,
    pub seed: u64,
    pub tables: SubsetTables,
}

/// An overlay code `f: M → K̃ⁿ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OverlayJson", into = "OverlayJson")]
pub struct OverlayCode {
    n: usize,
    gamma: f64,
    level_set: LevelSet,
    ell: usize,
    rows: Vec<Vec<u8>>,
    level_coords: Vec<Vec<Vec<usize>>>,
    provenance: Option<Provenance>,
}

impl OverlayCode {
    /// Wraps explicit level-index rows. Only the shape is validated; use
    /// [`verify_overlay`] to check the overlay properties.
    pub fn from_rows(n: usize, level_set: LevelSet, gamma: f64, rows: Vec<Vec<u8>>) -> Result<Self> {
        check_gamma(gamma)?;
        check_blocklength(n, &level_set)?;
        if rows.is_empty() {
            return domain("an overlay code needs at least one message");
        }
        let top = level_set.len() as u8;
        for (m, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Mismatch(format!("row {m} has length {}, expected {n}", row.len())));
            }
            if row.iter().any(|&l| l > top) {
                return domain(format!("row {m} has a level index above {top}"));
            }
        }
        let level_coords = rows
            .iter()
            .map(|row| {
                let mut sets = vec![Vec::new(); level_set.len()];
                for (i, &l) in row.iter().enumerate() {
                    if (l as usize) < sets.len() {
                        sets[l as usize].push(i);
                    }
                }
                sets
            })
            .collect();
        Ok(Self {
            n,
            gamma,
            ell: level_set.ell(n),
            level_set,
            rows,
            level_coords,
            provenance: None,
        })
    }

    /// Wraps explicit rows of level values (each in `K̃`).
    pub fn from_level_values(n: usize, level_set: LevelSet, gamma: f64, rows: &[Vec<f64>]) -> Result<Self> {
        let idx_rows = rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&v| {
                        level_set
                            .index_of(v)
                            .map(|i| i as u8)
                            .ok_or_else(|| Error::Domain(format!("value {v} is not in K~")))
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(n, level_set, gamma, idx_rows)
    }

    /// Deterministic assembly from given subset tables. Messages are numbered
    /// in mixed radix with the lowest level as the most significant digit.
    pub fn from_subset_tables(n: usize, level_set: LevelSet, gamma: f64, tables: &SubsetTables) -> Result<Self> {
        check_gamma(gamma)?;
        check_blocklength(n, &level_set)?;
        if tables.tables.len() != level_set.len() {
            return Err(Error::Mismatch(format!(
                "{} subset tables for {} levels",
                tables.tables.len(),
                level_set.len()
            )));
        }
        let ell = level_set.ell(n);
        let pools = level_set.pool_sizes(n);
        for (k, (table, &nk)) in tables.tables.iter().zip(&pools).enumerate() {
            if table.is_empty() {
                return domain(format!("level {k} has no subsets"));
            }
            for s in table {
                let distinct = s.windows(2).all(|w| w[0] < w[1]);
                if s.len() != ell || !distinct || s.iter().any(|&i| i >= nk) {
                    return domain(format!(
                        "level {k} subset {s:?} is not a sorted {ell}-subset of 0..{nk}"
                    ));
                }
            }
        }
        let counts = tables.level_counts();
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| Error::Infeasible("message count overflows".into()))?;
        let top = level_set.len() as u8;
        let mut rows = Vec::with_capacity(total);
        let mut digits = vec![0usize; counts.len()];
        for id in 0..total {
            let mut rem = id;
            for k in (0..counts.len()).rev() {
                digits[k] = rem % counts[k];
                rem /= counts[k];
            }
            let mut row = vec![top; n];
            let mut pool: Vec<usize> = (0..n).collect();
            for (k, &d) in digits.iter().enumerate() {
                let chosen = &tables.tables[k][d];
                let mut taken = vec![false; pool.len()];
                for &s in chosen {
                    row[pool[s]] = k as u8;
                    taken[s] = true;
                }
                let mut t = taken.iter();
                pool.retain(|_| !*t.next().unwrap());
            }
            rows.push(row);
        }
        Self::from_rows(n, level_set, gamma, rows)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level_set(&self) -> &LevelSet {
        &self.level_set
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn message_count(&self) -> usize {
        self.rows.len()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }

    /// Level indices of message `m`.
    pub fn row(&self, m: usize) -> &[u8] {
        &self.rows[m]
    }

    /// Level value `f_i(m)`.
    pub fn level(&self, m: usize, i: usize) -> f64 {
        self.level_set.value(self.rows[m][i] as usize)
    }

    /// `f(m)` as level values.
    pub fn levels_of(&self, m: usize) -> Vec<f64> {
        self.rows[m]
            .iter()
            .map(|&l| self.level_set.value(l as usize))
            .collect()
    }

    /// Test set `I_k(m)` for the level at `level_index` (0-based, sorted).
    pub fn test_set(&self, m: usize, level_index: usize) -> &[usize] {
        &self.level_coords[m][level_index]
    }

    /// Keeps the first `count` messages. Any subset of an overlay code is an
    /// overlay code at the lower rate.
    pub fn restrict(&self, count: usize) -> Result<Self> {
        if count == 0 || count > self.message_count() {
            return domain(format!(
                "cannot restrict {} messages to {count}",
                self.message_count()
            ));
        }
        let mut out = self.clone();
        out.rows.truncate(count);
        out.level_coords.truncate(count);
        Ok(out)
    }

    /// Appends one row (used for the silent message).
    pub fn with_extra_row(&self, row: Vec<u8>) -> Result<Self> {
        let mut rows = self.rows.clone();
        rows.push(row);
        let mut out = Self::from_rows(self.n, self.level_set.clone(), self.gamma, rows)?;
        out.provenance = self.provenance.clone();
        Ok(out)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("overlay codes always serialize")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MessageJson {
    level_coords: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OverlayJson {
    n: usize,
    gamma: f64,
    levels: Vec<f64>,
    messages: Vec<MessageJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

impl From<OverlayCode> for OverlayJson {
    fn from(code: OverlayCode) -> Self {
        let messages = code
            .level_coords
            .iter()
            .map(|sets| MessageJson {
                level_coords: sets
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        (
                            format!("{}", code.level_set.value(k)),
                            s.iter().map(|i| i + 1).collect(),
                        )
                    })
                    .collect(),
            })
            .collect();
        OverlayJson {
            n: code.n,
            gamma: code.gamma,
            levels: code.level_set.levels.clone(),
            messages,
            provenance: code.provenance,
        }
    }
}

impl TryFrom<OverlayJson> for OverlayCode {
    type Error = Error;

    fn try_from(js: OverlayJson) -> Result<Self> {
        let level_set = LevelSet::new(js.levels)?;
        let top = level_set.len() as u8;
        let mut rows = Vec::with_capacity(js.messages.len());
        for msg in &js.messages {
            let mut row = vec![top; js.n];
            for (key, coords) in &msg.level_coords {
                let v: f64 = key
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad level key {key:?}")))?;
                let k = level_set
                    .index_of(v)
                    .filter(|&k| k < level_set.len())
                    .ok_or_else(|| Error::Parse(format!("level {key} not in K")))?;
                for &c in coords {
                    if c == 0 || c > js.n {
                        return Err(Error::Parse(format!("coordinate {c} outside 1..={}", js.n)));
                    }
                    if row[c - 1] != top {
                        return Err(Error::Parse(format!("coordinate {c} assigned twice")));
                    }
                    row[c - 1] = k as u8;
                }
            }
            rows.push(row);
        }
        let mut code = OverlayCode::from_rows(js.n, level_set, js.gamma, rows)?;
        code.provenance = js.provenance;
        Ok(code)
    }
}

/// How many messages each level of the construction carries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateChoice {
    /// Achievable per-level rates with the chosen defect term.
    Design(DefectTerm),
    /// Explicit per-level rates `r_k`, giving `|M_k| = ⌊exp(n_k r_k)⌋`.
    PerLevel(Vec<f64>),
    /// Explicit per-level message counts.
    Counts(Vec<usize>),
}

impl Default for RateChoice {
    fn default() -> Self {
        RateChoice::Design(DefectTerm::Existence)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstructOptions {
    pub rates: RateChoice,
    /// Fresh samples drawn before giving up.
    pub retry_limit: usize,
    /// Cap on the total number of messages that get materialized. Larger
    /// design counts are reduced level by level (largest first) until the
    /// product fits.
    pub max_messages: usize,
}

impl Default for ConstructOptions {
    fn default() -> Self {
        Self {
            rates: RateChoice::default(),
            retry_limit: 64,
            max_messages: 1024,
        }
    }
}

fn capped_counts(log_counts: &[f64], cap: usize) -> Vec<usize> {
    let cap_f = cap as f64;
    let mut counts: Vec<usize> = log_counts
        .iter()
        .map(|&l| {
            let c = l.exp().floor();
            if c >= cap_f {
                cap
            } else {
                (c as usize).max(1)
            }
        })
        .collect();
    let product = |c: &[usize]| c.iter().fold(1u128, |a, &x| a * x as u128);
    while product(&counts) > cap as u128 {
        let (i, _) = counts
            .iter()
            .enumerate()
            .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
            .unwrap();
        counts[i] = (counts[i] / 2).max(1);
    }
    counts
}

fn sample_tables<R: Rng>(rng: &mut R, pools: &[usize], ell: usize, counts: &[usize]) -> SubsetTables {
    SubsetTables {
        tables: pools
            .iter()
            .zip(counts)
            .map(|(&nk, &c)| {
                (0..c)
                    .map(|_| {
                        let mut s = rand::seq::index::sample(rng, nk, ell).into_vec();
                        s.sort_unstable();
                        s
                    })
                    .collect()
            })
            .collect(),
    }
}

fn bitset(nk: usize, s: &[usize]) -> Vec<u64> {
    let mut b = vec![0u64; nk.div_ceil(64)];
    for &i in s {
        b[i / 64] |= 1 << (i % 64);
    }
    b
}

/// Pairwise `|S_k(a) ∩ S_k(b)| ≤ γℓ` inside every level table.
fn tables_separated(tables: &SubsetTables, pools: &[usize], ell: usize, gamma: f64) -> bool {
    let limit = gamma * ell as f64;
    tables.tables.iter().zip(pools).all(|(table, &nk)| {
        let bits: Vec<Vec<u64>> = table.iter().map(|s| bitset(nk, s)).collect();
        (0..bits.len()).all(|a| {
            (0..a).all(|b| {
                let shared: u32 = bits[a]
                    .iter()
                    .zip(&bits[b])
                    .map(|(x, y)| (x & y).count_ones())
                    .sum();
                shared as f64 <= limit
            })
        })
    })
}

/// Randomized overlay construction with explicit verification.
///
/// Each level `k` gets `|M_k|` independent uniform `ℓ`-subsets of its pool
/// `{0..n_k}`; a message's level-`k` coordinates are the image of its subset
/// under the order-preserving map onto the coordinates still unassigned
/// after the lower levels. Samples are redrawn until [`verify_overlay`]
/// accepts the result or `retry_limit` is reached.
pub fn construct_overlay(
    n: usize,
    level_set: &LevelSet,
    gamma: f64,
    options: &ConstructOptions,
    seed: u64,
) -> Result<OverlayCode> {
    check_gamma(gamma)?;
    check_blocklength(n, level_set)?;
    let ell = level_set.ell(n);
    let pools = level_set.pool_sizes(n);

    let (design_log_counts, counts) = match &options.rates {
        RateChoice::Design(defect) => {
            let logs = design_log_counts(n, level_set, gamma, *defect)?;
            let counts = capped_counts(&logs, options.max_messages);
            (logs, counts)
        }
        RateChoice::PerLevel(rates) => {
            if rates.len() != level_set.len() {
                return Err(Error::Mismatch(format!("{} rates for {} levels", rates.len(), level_set.len())));
            }
            if let Some(r) = rates.iter().find(|r| !(**r >= 0.0)) {
                return domain(format!("per-level rate {r} must be non-negative"));
            }
            let logs: Vec<f64> = rates.iter().zip(&pools).map(|(r, &nk)| r * nk as f64).collect();
            let counts = capped_counts(&logs, options.max_messages);
            (logs, counts)
        }
        RateChoice::Counts(counts) => {
            if counts.len() != level_set.len() {
                return Err(Error::Mismatch(format!("{} counts for {} levels", counts.len(), level_set.len())));
            }
            if counts.contains(&0) {
                return domain("per-level message counts must be at least 1");
            }
            let total = counts.iter().fold(1u128, |a, &c| a * c as u128);
            if total > options.max_messages as u128 {
                return Err(Error::Infeasible(format!(
                    "{total} messages exceed the cap of {}",
                    options.max_messages
                )));
            }
            (counts.iter().map(|&c| (c as f64).ln()).collect(), counts.clone())
        }
    };

    for (k, (&c, &nk)) in counts.iter().zip(&pools).enumerate() {
        if (c as f64).ln() > ln_binomial(nk as u64, ell as u64) + 1e-9 {
            return Err(Error::Infeasible(format!(
                "level {k} asks for {c} distinct subsets but only C({nk}, {ell}) exist"
            )));
        }
    }

    for attempt in 0..options.retry_limit {
        let mut rng = stream(seed, attempt as u64, StreamRole::Overlay);
        let tables = sample_tables(&mut rng, &pools, ell, &counts);
        if !tables_separated(&tables, &pools, ell, gamma) {
            continue;
        }
        let mut code = OverlayCode::from_subset_tables(n, level_set.clone(), gamma, &tables)?;
        if is_overlay(&code) {
            code.provenance = Some(Provenance {
                level_counts: counts,
                design_log_counts,
                attempts: attempt + 1,
                seed,
                tables,
            });
            return Ok(code);
        }
    }
    Err(Error::RetryLimit {
        attempts: options.retry_limit,
    })
}

/// Witness (or its absence) for one ordered message pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairWitness {
    pub m: u32,
    pub m_prime: u32,
    /// Index into `K` of the first separating level, `None` on violation.
    pub level: Option<u16>,
    /// Shared coordinates at the witness level (or at the lowest level when
    /// no witness exists).
    pub overlap: u32,
}

/// A message whose level-`k` coordinate count differs from `ℓ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountViolation {
    pub message: usize,
    pub level: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub count_violations: Vec<CountViolation>,
    pub witnesses: Vec<PairWitness>,
}

impl VerifyReport {
    pub fn pair_violations(&self) -> impl Iterator<Item = &PairWitness> {
        self.witnesses.iter().filter(|w| w.level.is_none())
    }

    pub fn witness(&self, m: usize, m_prime: usize) -> Option<&PairWitness> {
        self.witnesses
            .iter()
            .find(|w| w.m as usize == m && w.m_prime as usize == m_prime)
    }
}

fn pair_witness(a: &[u8], b: &[u8], levels: usize, limit: f64, scratch: &mut [u32], lower: &mut [bool]) -> (Option<u16>, u32) {
    scratch.iter_mut().for_each(|x| *x = 0);
    lower.iter_mut().for_each(|x| *x = false);
    for (&x, &y) in a.iter().zip(b) {
        let x = x as usize;
        if x < levels {
            let y = y as usize;
            if x == y {
                scratch[x] += 1;
            } else if y < x {
                lower[x] = true;
            }
        }
    }
    for k in 0..levels {
        if scratch[k] as f64 <= limit && !lower[k] {
            return (Some(k as u16), scratch[k]);
        }
    }
    (None, scratch[0])
}

fn count_violations(code: &OverlayCode) -> Vec<CountViolation> {
    let mut out = Vec::new();
    for (m, sets) in code.level_coords.iter().enumerate() {
        for (k, s) in sets.iter().enumerate() {
            if s.len() != code.ell {
                out.push(CountViolation {
                    message: m,
                    level: k,
                    count: s.len(),
                });
            }
        }
    }
    out
}

/// Exhaustive check of the overlay properties over every ordered pair of
/// distinct messages, plus the per-level count invariant.
pub fn verify_overlay(code: &OverlayCode) -> VerifyReport {
    let levels = code.level_set.len();
    let limit = code.gamma * code.ell as f64;
    let count_violations = count_violations(code);
    let witnesses: Vec<PairWitness> = (0..code.message_count())
        .into_par_iter()
        .flat_map_iter(|m| {
            let mut scratch = vec![0u32; levels];
            let mut lower = vec![false; levels];
            let rows = &code.rows;
            (0..rows.len())
                .filter(move |&mp| mp != m)
                .map(move |mp| {
                    let (level, overlap) = pair_witness(&rows[m], &rows[mp], levels, limit, &mut scratch, &mut lower);
                    PairWitness {
                        m: m as u32,
                        m_prime: mp as u32,
                        level,
                        overlap,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let pass = count_violations.is_empty() && witnesses.iter().all(|w| w.level.is_some());
    VerifyReport {
        pass,
        count_violations,
        witnesses,
    }
}

/// Same predicate as [`verify_overlay`] without recording witnesses.
pub fn is_overlay(code: &OverlayCode) -> bool {
    if !count_violations(code).is_empty() {
        return false;
    }
    let levels = code.level_set.len();
    let limit = code.gamma * code.ell as f64;
    (0..code.message_count()).into_par_iter().all(|m| {
        let mut scratch = vec![0u32; levels];
        let mut lower = vec![false; levels];
        (0..code.message_count())
            .filter(|&mp| mp != m)
            .all(|mp| pair_witness(&code.rows[m], &code.rows[mp], levels, limit, &mut scratch, &mut lower).0.is_some())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn half() -> LevelSet {
        LevelSet::new(vec![0.0, 0.5]).unwrap()
    }

    fn worked_example_tables() -> SubsetTables {
        SubsetTables::from_one_based(vec![
            vec![vec![2, 7, 8], vec![1, 2, 6], vec![2, 6, 9], vec![1, 5, 9]],
            vec![vec![2, 4, 5], vec![3, 4, 6], vec![1, 3, 5]],
        ])
        .unwrap()
    }

    #[test]
    fn level_set_validation() {
        assert!(LevelSet::new(vec![]).is_err());
        assert!(LevelSet::new(vec![0.0, 1.0]).is_err());
        assert!(LevelSet::new(vec![0.5, 0.2]).is_err());
        assert!(LevelSet::new(vec![-0.1]).is_err());
        let u = LevelSet::uniform(4).unwrap();
        assert_eq!(u.levels(), &[0.0, 0.25, 0.5]);
        assert_eq!(u.ell(300), 75);
        assert_eq!(u.pool_sizes(300), vec![300, 225, 150]);
        assert_eq!(u.next_value(2), 1.0);
    }

    #[test]
    fn order_preserving_map_examples() {
        let target = [1, 3, 4, 5, 7, 8];
        let source: Vec<usize> = (1..=6).collect();
        assert_eq!(order_preserving_map(&source, &target, &[3, 4, 6]).unwrap(), vec![4, 5, 8]);
        assert_eq!(order_preserving_map(&target, &target, &[3, 7]).unwrap(), vec![3, 7]);
        assert_eq!(order_preserving_map(&[1, 2, 3], &[10, 20, 30], &[2]).unwrap(), vec![20]);
        assert!(matches!(order_preserving_map(&[1, 2], &[1, 2, 3], &[1]), Err(Error::Mismatch(_))));
        assert!(order_preserving_map(&[1, 2, 3], &[4, 5, 6], &[9]).is_err());
    }

    #[test]
    fn worked_example_row() {
        let code = OverlayCode::from_subset_tables(9, half(), 2.0 / 3.0, &worked_example_tables()).unwrap();
        assert_eq!(code.message_count(), 12);
        // message "32": third level-0 subset, second level-1/2 subset
        assert_eq!(code.levels_of(2 * 3 + 1), vec![1.0, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0, 0.5, 0.0]);
    }

    #[test]
    fn worked_example_verifies_with_expected_witness() {
        let code = OverlayCode::from_subset_tables(9, half(), 2.0 / 3.0, &worked_example_tables()).unwrap();
        let report = verify_overlay(&code);
        assert!(report.pass);
        assert_eq!(report.witnesses.len(), 12 * 11);
        let w = report.witness(0, 1).unwrap();
        assert_eq!(w.level, Some(1));
        assert_eq!(w.overlap, 1);
    }

    #[test]
    fn mutated_example_fails_count_check() {
        let code = OverlayCode::from_subset_tables(9, half(), 2.0 / 3.0, &worked_example_tables()).unwrap();
        let mut rows: Vec<Vec<u8>> = (0..12).map(|m| code.row(m).to_vec()).collect();
        // coordinate 5 of f(12) from 1/2 to 1
        assert_eq!(rows[1][4], 1);
        rows[1][4] = 2;
        let bad = OverlayCode::from_rows(9, half(), 2.0 / 3.0, rows).unwrap();
        let report = verify_overlay(&bad);
        assert!(!report.pass);
        assert_eq!(
            report.count_violations,
            vec![CountViolation {
                message: 1,
                level: 1,
                count: 2
            }]
        );
        assert!(!is_overlay(&bad));
    }

    #[test]
    fn identical_rows_violate_separation() {
        let code = OverlayCode::from_subset_tables(9, half(), 2.0 / 3.0, &worked_example_tables()).unwrap();
        let rows = vec![code.row(0).to_vec(), code.row(0).to_vec()];
        let dup = OverlayCode::from_rows(9, half(), 2.0 / 3.0, rows).unwrap();
        let report = verify_overlay(&dup);
        assert!(!report.pass);
        assert_eq!(report.pair_violations().count(), 2);
        assert!(report.count_violations.is_empty());
    }

    #[test]
    fn single_message_is_vacuous() {
        let code = construct_overlay(
            12,
            &half(),
            0.75,
            &ConstructOptions {
                rates: RateChoice::Counts(vec![1, 1]),
                ..Default::default()
            },
            3,
        )
        .unwrap();
        let report = verify_overlay(&code);
        assert!(report.pass);
        assert!(report.witnesses.is_empty());
        assert_eq!(code.test_set(0, 0).len(), 4);
        assert_eq!(code.test_set(0, 1).len(), 4);
    }

    #[test]
    fn existence_rate_examples() {
        assert_eq!(overlay_rate_existence(9, &half(), 2.0 / 3.0).unwrap().value(), 0.0);
        assert_relative_eq!(
            overlay_rate_asymptotic(8, 0.75).unwrap().value(),
            0.247_246_011_641_068_4,
            epsilon = 1e-12
        );
        assert_eq!(overlay_rate_asymptotic(4, 0.75).unwrap().value(), 0.0);
        for g in [0.51, 0.6, 0.75, 0.99] {
            assert_eq!(overlay_rate_asymptotic(2, g).unwrap().value(), 0.0);
        }
        assert!(overlay_rate_existence(9, &half(), 0.5).is_err());
    }

    #[test]
    fn finite_rate_dominates_asymptotic_rate_for_large_n() {
        // The large-n expression is a lower bound on the finite-n rate.
        let ls = LevelSet::uniform(8).unwrap();
        let finite = overlay_rate_existence(1_000_000, &ls, 0.75).unwrap().value();
        let asymptotic = overlay_rate_asymptotic(8, 0.75).unwrap().value();
        assert_relative_eq!(finite, 0.809_385_010_893_943_7, epsilon = 1e-9);
        assert!(finite >= asymptotic);
    }

    #[test]
    fn construction_defect_is_never_smaller() {
        let ls = LevelSet::uniform(4).unwrap();
        for n in [40, 120, 300, 1000] {
            let t = overlay_rate_bound(n, &ls, 0.75, DefectTerm::Existence).unwrap().value();
            let c = overlay_rate_bound(n, &ls, 0.75, DefectTerm::Construction).unwrap().value();
            assert!(c >= t);
        }
    }

    #[test]
    fn capping_halves_largest_level() {
        assert_eq!(capped_counts(&[100.0, 100.0], 1024), vec![32, 32]);
        assert_eq!(capped_counts(&[0.0, 0.0], 1024), vec![1, 1]);
        assert_eq!(capped_counts(&[3.0f64.ln(), 0.0], 1024), vec![3, 1]);
    }

    #[test]
    fn infeasible_counts_rejected() {
        let ls = LevelSet::new(vec![0.0]).unwrap();
        // C(4, 2) = 6 < 7
        let err = construct_overlay(
            4,
            &ls,
            0.75,
            &ConstructOptions {
                rates: RateChoice::Counts(vec![7]),
                ..Default::default()
            },
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }

    #[test]
    fn retry_limit_is_reported() {
        let ls = LevelSet::new(vec![0.0]).unwrap();
        // six 2-subsets of a 4-set: some pair always shares a coordinate, and
        // with gamma * ell = 1.02 only disjoint-or-singleton overlaps pass,
        // but two identical subsets among six draws are near certain.
        let err = construct_overlay(
            4,
            &ls,
            0.51,
            &ConstructOptions {
                rates: RateChoice::Counts(vec![6]),
                retry_limit: 3,
                max_messages: 1024,
            },
            0,
        )
        .unwrap_err();
        assert_eq!(err, Error::RetryLimit { attempts: 3 });
    }

    #[test]
    fn json_round_trip_is_one_based() {
        let code = OverlayCode::from_subset_tables(9, half(), 2.0 / 3.0, &worked_example_tables()).unwrap();
        let s = code.to_json_string();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["messages"][7]["level_coords"]["0"], serde_json::json!([2, 6, 9]));
        assert_eq!(v["messages"][7]["level_coords"]["0.5"], serde_json::json!([4, 5, 8]));
        assert_eq!(OverlayCode::from_json_str(&s).unwrap(), code);
        assert!(OverlayCode::from_json_str(r#"{"n":3,"gamma":0.75,"levels":[0.0],"messages":[{"level_coords":{"0":[4]}}]}"#).is_err());
    }
}
