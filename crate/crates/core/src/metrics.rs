//! Data-driven balance measures over performance distributions: symmetry
//! deviation, difficulty, dominance and viability, popularity and the
//! observational success-rate delta.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{classify_log, encounter_baselines, trim, DistError};
use crate::model::{BuildKey, CombatLog, PerformanceDistribution, ProfSpec};
use crate::roles::RoleThresholds;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("need at least 2 builds, got {0}")]
    TooFewBuilds(usize),
    #[error("insufficient samples (min_n = {min_n}) for: {}", keys.join(", "))]
    InsufficientSamples { min_n: usize, keys: Vec<String> },
    #[error("median of {0} is zero")]
    ZeroMedian(String),
    #[error("distributions come from different encounters or eras")]
    MismatchedContext,
    #[error("no encounter has two builds meeting min_n = {0}")]
    NoQualifyingPairs(usize),
    #[error("era `{0}` has no player slots")]
    EmptyEra(String),
    #[error("invalid policy: {0}")]
    BadPolicy(String),
    #[error(transparent)]
    Distribution(#[from] DistError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DominanceMode {
    /// Every trimmed sample of x above every trimmed sample of y.
    Strict,
    /// x's low quantile above y's high quantile, on trimmed samples.
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DominancePolicy {
    pub mode: DominanceMode,
    pub low_q: f64,
    pub high_q: f64,
    pub min_n: usize,
    pub trim: (f64, f64),
}

impl Default for DominancePolicy {
    fn default() -> Self {
        DominancePolicy {
            mode: DominanceMode::Quantile,
            low_q: 0.05,
            high_q: 0.95,
            min_n: 20,
            trim: (0.01, 0.99),
        }
    }
}

impl DominancePolicy {
    pub fn strict() -> Self {
        DominancePolicy {
            mode: DominanceMode::Strict,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let bad = |m: &str| Err(MetricError::BadPolicy(m.to_string()));
        if !(0.0 <= self.low_q && self.low_q < self.high_q && self.high_q <= 1.0) {
            return bad("need 0 <= low_q < high_q <= 1");
        }
        if self.min_n < 2 {
            return bad("min_n must be at least 2");
        }
        SampleRules { min_n: self.min_n, trim: self.trim }.validate()
    }

    pub fn rules(&self) -> SampleRules {
        SampleRules {
            min_n: self.min_n,
            trim: self.trim,
        }
    }
}

/// Minimum sample count and trimming band applied before a metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRules {
    pub min_n: usize,
    pub trim: (f64, f64),
}

impl Default for SampleRules {
    fn default() -> Self {
        DominancePolicy::default().rules()
    }
}

impl SampleRules {
    pub fn validate(&self) -> Result<(), MetricError> {
        let (lo, hi) = self.trim;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(MetricError::BadPolicy("need 0 <= trim low < trim high <= 1".into()));
        }
        Ok(())
    }

    fn require(&self, dists: &[&PerformanceDistribution]) -> Result<(), MetricError> {
        let short: Vec<String> = dists
            .iter()
            .filter(|d| d.n() < self.min_n)
            .map(|d| d.key().to_string())
            .collect();
        if short.is_empty() {
            Ok(())
        } else {
            Err(MetricError::InsufficientSamples {
                min_n: self.min_n,
                keys: short,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyPolicy {
    /// Sample standard deviation over median.
    #[default]
    RelativeDispersion,
    /// Sample variance (n - 1 denominator).
    RawVariance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Symmetry {
    pub absolute: f64,
    pub normalized: f64,
}

/// Mean squared deviation of per-build medians from their mean.
///
/// `normalized` divides by the squared mean so values compare across eras
/// and encounters; it is 0 when every median is 0.
pub fn symmetry_deviation(
    dists: &BTreeMap<BuildKey, PerformanceDistribution>,
    min_n: usize,
) -> Result<Symmetry, MetricError> {
    if dists.len() < 2 {
        return Err(MetricError::TooFewBuilds(dists.len()));
    }
    let all: Vec<&PerformanceDistribution> = dists.values().collect();
    SampleRules { min_n, trim: (0.0, 1.0) }.require(&all)?;
    let medians: Vec<f64> = all.iter().map(|d| d.median()).collect();
    let grand = stats::mean(&medians);
    let absolute = medians.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / medians.len() as f64;
    let normalized = if grand == 0.0 { 0.0 } else { absolute / (grand * grand) };
    Ok(Symmetry { absolute, normalized })
}

/// Dispersion of the trimmed samples; higher means harder to play well.
pub fn difficulty_score(
    dist: &PerformanceDistribution,
    policy: DifficultyPolicy,
    rules: &SampleRules,
) -> Result<f64, MetricError> {
    rules.validate()?;
    rules.require(&[dist])?;
    let t = trim(dist, rules.trim.0, rules.trim.1)?;
    let var = stats::sample_variance(t.samples());
    match policy {
        DifficultyPolicy::RawVariance => Ok(var),
        DifficultyPolicy::RelativeDispersion => {
            if t.median() <= 0.0 {
                return Err(MetricError::ZeroMedian(dist.key().to_string()));
            }
            Ok(var.sqrt() / t.median())
        }
    }
}

/// The (floor, ceiling) pair compared by the dominance rule: `x` dominates
/// `y` iff `floor(x) > ceiling(y)`.
fn dominance_bounds(d: &PerformanceDistribution, policy: &DominancePolicy) -> Result<(f64, f64), MetricError> {
    let t = trim(d, policy.trim.0, policy.trim.1)?;
    Ok(match policy.mode {
        DominanceMode::Strict => (t.min(), t.max()),
        DominanceMode::Quantile => (
            stats::sorted_quantile(t.samples(), policy.low_q),
            stats::sorted_quantile(t.samples(), policy.high_q),
        ),
    })
}

/// Whether `x` dominates `y`. Irreflexive, and at most one direction holds.
pub fn dominates(
    x: &PerformanceDistribution,
    y: &PerformanceDistribution,
    policy: &DominancePolicy,
) -> Result<bool, MetricError> {
    policy.validate()?;
    if !x.same_context(y) {
        return Err(MetricError::MismatchedContext);
    }
    policy.rules().require(&[x, y])?;
    let (x_floor, _) = dominance_bounds(x, policy)?;
    let (_, y_ceiling) = dominance_bounds(y, policy)?;
    Ok(x_floor > y_ceiling)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DominatedBy {
    pub encounter: String,
    pub dominator: BuildKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Viability {
    pub build: BuildKey,
    pub dominated_count: usize,
    pub dominated_by: Vec<DominatedBy>,
}

/// Accumulates dominated occurrences over every encounter and ranks builds
/// from least to most viable (count descending, then build order).
pub fn viability_ranking(
    all_dists: &BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>>,
    policy: &DominancePolicy,
) -> Result<Vec<Viability>, MetricError> {
    policy.validate()?;
    let mut rows: BTreeMap<BuildKey, Vec<DominatedBy>> = BTreeMap::new();
    let mut any_pairs = false;
    for (encounter, dists) in all_dists {
        let qualifying: Vec<(&BuildKey, (f64, f64))> = dists
            .iter()
            .filter(|(_, d)| d.n() >= policy.min_n)
            .map(|(k, d)| dominance_bounds(d, policy).map(|b| (k, b)))
            .collect::<Result<_, _>>()?;
        for (k, _) in &qualifying {
            rows.entry((*k).clone()).or_default();
        }
        if qualifying.len() < 2 {
            continue;
        }
        any_pairs = true;
        for (dominated, (_, ceiling)) in &qualifying {
            for (dominator, (floor, _)) in &qualifying {
                if dominated != dominator && floor > ceiling {
                    rows.get_mut(*dominated).expect("row inserted").push(DominatedBy {
                        encounter: encounter.clone(),
                        dominator: (*dominator).clone(),
                    });
                }
            }
        }
    }
    if !any_pairs {
        return Err(MetricError::NoQualifyingPairs(policy.min_n));
    }
    let mut ranking: Vec<Viability> = rows
        .into_iter()
        .map(|(build, dominated_by)| Viability {
            build,
            dominated_count: dominated_by.len(),
            dominated_by,
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.dominated_count
            .cmp(&a.dominated_count)
            .then_with(|| a.build.cmp(&b.build))
    });
    Ok(ranking)
}

/// Player slots per (profession, specialization).
pub fn slot_counts<'a>(logs: impl IntoIterator<Item = &'a CombatLog>) -> BTreeMap<ProfSpec, u64> {
    let mut counts = BTreeMap::new();
    for log in logs {
        for p in &log.players {
            *counts.entry(p.prof_spec()).or_default() += 1;
        }
    }
    counts
}

/// What one unit of popularity is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityUnit {
    /// Every player slot of every log.
    #[default]
    PlayerSlot,
    /// Distinct `account_hash` values per (profession, specialization). An
    /// account seen on two builds counts once for each.
    UniqueAccount,
}

/// Distinct accounts per (profession, specialization).
pub fn account_counts<'a>(logs: impl IntoIterator<Item = &'a CombatLog>) -> BTreeMap<ProfSpec, u64> {
    let mut seen: BTreeMap<ProfSpec, BTreeSet<&str>> = BTreeMap::new();
    for log in logs {
        for p in &log.players {
            seen.entry(p.prof_spec()).or_default().insert(p.account_hash.as_str());
        }
    }
    seen.into_iter().map(|(k, v)| (k, v.len() as u64)).collect()
}

pub fn unit_counts<'a>(
    logs: impl IntoIterator<Item = &'a CombatLog>,
    unit: PopularityUnit,
) -> BTreeMap<ProfSpec, u64> {
    match unit {
        PopularityUnit::PlayerSlot => slot_counts(logs),
        PopularityUnit::UniqueAccount => account_counts(logs),
    }
}

/// Share of player slots per (profession, specialization). Shares sum to 1.
pub fn popularity(logs: &[CombatLog]) -> Result<BTreeMap<ProfSpec, f64>, MetricError> {
    let counts = slot_counts(logs);
    let total: u64 = counts.values().sum();
    if total == 0 {
        let era = logs.first().map(|l| l.patch_era.clone()).unwrap_or_default();
        return Err(MetricError::EmptyEra(era));
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, c as f64 / total as f64))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityShift {
    pub build: ProfSpec,
    /// `100 * (share_b - share_a)`, in percentage points.
    pub delta_pp: f64,
}

/// Percentage-point change in slot share from `era_a` to `era_b`, sorted by
/// delta descending. A build absent in one era has share 0 there.
///
/// The delta is evaluated as `100 (c_b T_a - c_a T_b) / (T_a T_b)` over
/// integer slot counts, so it is the correctly rounded value of the exact
/// rational delta while the products stay below 2^53.
pub fn popularity_shift(
    era_a: &str,
    era_b: &str,
    logs: &[CombatLog],
) -> Result<Vec<PopularityShift>, MetricError> {
    let a = slot_counts(logs.iter().filter(|l| l.patch_era == era_a));
    let b = slot_counts(logs.iter().filter(|l| l.patch_era == era_b));
    shift_from_counts(era_a, &a, era_b, &b)
}

pub fn shift_from_counts(
    era_a: &str,
    a: &BTreeMap<ProfSpec, u64>,
    era_b: &str,
    b: &BTreeMap<ProfSpec, u64>,
) -> Result<Vec<PopularityShift>, MetricError> {
    let total_a: u64 = a.values().sum();
    let total_b: u64 = b.values().sum();
    if total_a == 0 {
        return Err(MetricError::EmptyEra(era_a.to_string()));
    }
    if total_b == 0 {
        return Err(MetricError::EmptyEra(era_b.to_string()));
    }
    let keys: BTreeSet<&ProfSpec> = a.keys().chain(b.keys()).collect();
    let mut out: Vec<PopularityShift> = keys
        .into_iter()
        .map(|k| {
            let ca = *a.get(k).unwrap_or(&0) as i128;
            let cb = *b.get(k).unwrap_or(&0) as i128;
            let num = 100 * (cb * total_a as i128 - ca * total_b as i128);
            let den = total_a as i128 * total_b as i128;
            PopularityShift {
                build: k.clone(),
                delta_pp: num as f64 / den as f64,
            }
        })
        .collect();
    out.sort_by(|x, y| {
        y.delta_pp
            .total_cmp(&x.delta_pp)
            .then_with(|| x.build.cmp(&y.build))
    });
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessDelta {
    /// Success rate with the build present minus the rate without it.
    pub delta: f64,
    pub n_with: usize,
    pub n_without: usize,
}

/// Observational success-rate difference between attempts that include at
/// least one player of `build` and attempts that include none. Confounded
/// by everything else about those groups.
pub fn fairness_success_delta(
    logs: &[CombatLog],
    build: &BuildKey,
    thresholds: &RoleThresholds,
    min_n: usize,
) -> Result<FairnessDelta, MetricError> {
    let baselines = encounter_baselines(logs);
    let mut attempts = Vec::with_capacity(logs.len());
    for log in logs {
        let keys = classify_log(log, baselines[&log.encounter_id], thresholds)?;
        attempts.push((log.success, keys));
    }
    fairness_over(&attempts, build, min_n)
}

/// Success-rate delta over attempts already classified into build keys.
pub fn fairness_over(
    attempts: &[(bool, Vec<BuildKey>)],
    build: &BuildKey,
    min_n: usize,
) -> Result<FairnessDelta, MetricError> {
    let (mut with, mut without) = ((0usize, 0usize), (0usize, 0usize));
    for (success, keys) in attempts {
        let group = if keys.contains(build) { &mut with } else { &mut without };
        group.0 += 1;
        group.1 += *success as usize;
    }
    if with.0 < min_n || without.0 < min_n || with.0 == 0 || without.0 == 0 {
        return Err(MetricError::InsufficientSamples {
            min_n,
            keys: vec![format!(
                "{build} (with {}, without {})",
                with.0, without.0
            )],
        });
    }
    let rate = |(n, s): (usize, usize)| s as f64 / n as f64;
    Ok(FairnessDelta {
        delta: rate(with) - rate(without),
        n_with: with.0,
        n_without: without.0,
    })
}
