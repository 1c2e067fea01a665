//! Per-era balance report: assembly from a store, versioned serialization
//! and parsing.
//!
//! Reports are JSON with sorted keys and every iteration order pinned, so the
//! same store contents and configuration always render the same bytes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{build_distributions, by_encounter, classify_log, encounter_baselines, subsample, DistError};
use crate::metrics::{
    difficulty_score, shift_from_counts, slot_counts, symmetry_deviation, unit_counts,
    viability_ranking, DifficultyPolicy, DominancePolicy, MetricError, PopularityShift,
    PopularityUnit, Viability,
};
use crate::model::{BuildKey, CombatLog, EraId, PerformanceDistribution, ProfSpec};
use crate::roles::RoleThresholds;
use crate::stats;
use crate::store::{LogStore, StoreError};

pub const REPORT_FORMAT: &str = "balance-report/1";
pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const FAIRNESS_LABEL: &str = "observational - confounded";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("era `{0}` is not registered")]
    UnknownEra(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Distribution(#[from] DistError),
    #[error("invalid role thresholds: {0}")]
    Thresholds(#[from] crate::roles::RoleError),
    #[error("not a {expected} document: {detail}")]
    Format { expected: &'static str, detail: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub thresholds: RoleThresholds,
    /// Also supplies `min_n` and the trimming band for difficulty.
    pub dominance: DominancePolicy,
    pub difficulty: DifficultyPolicy,
    /// Drop FullSupport and OffensiveSupport builds from the damage metrics.
    pub exclude_support: bool,
    #[serde(default)]
    pub popularity_unit: PopularityUnit,
    pub reference_era: Option<String>,
    /// Samples kept per distribution for plot clouds.
    pub cloud_size: usize,
    pub cloud_seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            thresholds: RoleThresholds::default(),
            dominance: DominancePolicy::default(),
            difficulty: DifficultyPolicy::default(),
            exclude_support: false,
            popularity_unit: PopularityUnit::PlayerSlot,
            reference_era: None,
            cloud_size: 1000,
            cloud_seed: 0,
        }
    }
}

/// Configuration plus the fixed conventions the numbers depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    #[serde(flatten)]
    pub config: MetricsConfig,
    pub symmetry_location: String,
    pub symmetry_aggregate: String,
    pub difficulty_aggregate: String,
    pub role_baseline: String,
    pub quantile_definition: String,
}

impl ConfigEcho {
    fn new(config: &MetricsConfig) -> Self {
        ConfigEcho {
            config: config.clone(),
            symmetry_location: "median per build; baseline = mean of medians".into(),
            symmetry_aggregate: "unweighted mean of per-encounter normalized deviation".into(),
            difficulty_aggregate: "sample-count-weighted mean of per-encounter scores".into(),
            role_baseline: "median dps over all slots of the encounter in this era".into(),
            quantile_definition: "linear interpolation between closest ranks, h = (n-1)q".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub logs: usize,
    pub player_slots: usize,
    pub encounters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterSymmetry {
    pub encounter: String,
    pub builds: usize,
    pub absolute: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymmetrySection {
    pub per_encounter: Vec<EncounterSymmetry>,
    pub aggregate_normalized: Option<f64>,
    /// Encounters with fewer than two builds meeting min_n.
    pub skipped_encounters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyEntry {
    pub build: BuildKey,
    pub score: f64,
    pub n: usize,
    pub encounters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub build: BuildKey,
    pub n: usize,
    pub encounters: usize,
    /// Sample-weighted mean of per-encounter medians.
    pub median_dps: f64,
    /// Sample-weighted mean of the per-encounter percentile of the build's
    /// median among qualifying builds (0 lowest, 1 highest).
    pub median_percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityEntry {
    pub build: ProfSpec,
    /// Slots or accounts, per the configured unit.
    pub count: u64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSection {
    pub reference_era: String,
    /// Share in this era minus share in the reference era, percentage points.
    pub deltas: Vec<PopularityShift>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessEntry {
    pub encounter: String,
    pub build: BuildKey,
    pub delta: f64,
    pub n_with: usize,
    pub n_without: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionSummary {
    pub encounter: String,
    pub build: BuildKey,
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Seeded subsample of at most `cloud_size` samples, ascending.
    pub cloud: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub format: String,
    pub engine_version: String,
    pub era: EraId,
    pub era_registry_hash: String,
    pub config: ConfigEcho,
    pub totals: Totals,
    pub symmetry: SymmetrySection,
    /// Hardest first.
    pub difficulty: Vec<DifficultyEntry>,
    /// Least viable first.
    pub viability: Vec<Viability>,
    pub builds: Vec<BuildSummary>,
    pub popularity: Vec<PopularityEntry>,
    pub popularity_shift: Option<ShiftSection>,
    pub fairness: Vec<FairnessEntry>,
    pub distributions: Vec<DistributionSummary>,
}

impl BalanceReport {
    pub fn build_summary(&self, key: &BuildKey) -> Option<&BuildSummary> {
        self.builds.iter().find(|b| &b.build == key)
    }

    pub fn render(&self) -> String {
        render_sorted(self)
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        parse_versioned(text, REPORT_FORMAT)
    }
}

/// Pretty JSON with object keys sorted, newline terminated.
pub fn render_sorted<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("report types serialize");
    let mut out = serde_json::to_string_pretty(&value).expect("values serialize");
    out.push('\n');
    out
}

/// Parses a document whose `format` field must equal `expected`.
pub fn parse_versioned<T: serde::de::DeserializeOwned>(
    text: &str,
    expected: &'static str,
) -> Result<T, ReportError> {
    let format_err = |detail: String| ReportError::Format { expected, detail };
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| format_err(e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(f) if f == expected => {}
        other => return Err(format_err(format!("format field is {other:?}"))),
    }
    serde_json::from_value(value).map_err(|e| format_err(e.to_string()))
}

/// Runs every balance metric for one era of the store.
pub fn build_report(
    store: &LogStore,
    era_label: &str,
    config: &MetricsConfig,
) -> Result<BalanceReport, ReportError> {
    config.thresholds.validate()?;
    config.dominance.validate()?;
    let era = store
        .era(era_label)
        .ok_or_else(|| ReportError::UnknownEra(era_label.to_string()))?
        .clone();
    let logs = store.scan(Some(era_label), None)?;
    let reference = match &config.reference_era {
        Some(label) => {
            if store.era(label).is_none() {
                return Err(ReportError::UnknownEra(label.clone()));
            }
            Some((label.clone(), store.scan(Some(label), None)?))
        }
        None => None,
    };
    analyze(&logs, &era, reference.as_ref().map(|(l, v)| (l.as_str(), v.as_slice())), store.era_registry_hash(), config)
}

/// Store-independent core of [`build_report`].
pub fn analyze(
    logs: &[CombatLog],
    era: &EraId,
    reference: Option<(&str, &[CombatLog])>,
    era_registry_hash: String,
    config: &MetricsConfig,
) -> Result<BalanceReport, ReportError> {
    let total_slots: u64 = slot_counts(logs).values().sum();
    if total_slots == 0 {
        return Err(MetricError::EmptyEra(era.label.clone()).into());
    }
    let counts = unit_counts(logs, config.popularity_unit);
    let total: u64 = counts.values().sum();
    let popularity = counts
        .iter()
        .map(|(k, &c)| PopularityEntry {
            build: k.clone(),
            count: c,
            share: c as f64 / total as f64,
        })
        .collect();
    let popularity_shift = match reference {
        Some((label, ref_logs)) => Some(ShiftSection {
            reference_era: label.to_string(),
            deltas: shift_from_counts(label, &unit_counts(ref_logs, config.popularity_unit), &era.label, &counts)?,
        }),
        None => None,
    };

    let all = build_distributions(logs, era, &config.thresholds)?;
    let distributions = all
        .values()
        .map(|d| summarize(d, config))
        .collect();
    let grouped = by_encounter(all);
    let rules = config.dominance.rules();
    let analysis: BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>> = grouped
        .iter()
        .map(|(enc, builds)| {
            let kept = builds
                .iter()
                .filter(|(k, d)| d.n() >= rules.min_n && !(config.exclude_support && k.role().is_support()))
                .map(|(k, d)| (k.clone(), d.clone()))
                .collect();
            (enc.clone(), kept)
        })
        .collect();
    if analysis.values().all(BTreeMap::is_empty) {
        let keys = grouped
            .values()
            .flat_map(|b| b.values())
            .filter(|d| !(config.exclude_support && d.key().role().is_support()))
            .map(|d| format!("{}@{} (n={})", d.key(), d.encounter_id(), d.n()))
            .collect();
        return Err(MetricError::InsufficientSamples { min_n: rules.min_n, keys }.into());
    }

    let mut symmetry = SymmetrySection {
        per_encounter: Vec::new(),
        aggregate_normalized: None,
        skipped_encounters: Vec::new(),
    };
    for (enc, builds) in &analysis {
        if builds.len() < 2 {
            symmetry.skipped_encounters.push(enc.clone());
            continue;
        }
        let s = symmetry_deviation(builds, rules.min_n)?;
        symmetry.per_encounter.push(EncounterSymmetry {
            encounter: enc.clone(),
            builds: builds.len(),
            absolute: s.absolute,
            normalized: s.normalized,
        });
    }
    if !symmetry.per_encounter.is_empty() {
        let normalized: Vec<f64> = symmetry.per_encounter.iter().map(|s| s.normalized).collect();
        symmetry.aggregate_normalized = Some(stats::mean(&normalized));
    }

    let difficulty = aggregate_difficulty(&analysis, config)?;
    let viability = match viability_ranking(&analysis, &config.dominance) {
        Ok(v) => v,
        Err(MetricError::NoQualifyingPairs(_)) => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let builds = summarize_builds(&analysis);
    let fairness = fairness_entries(logs, &analysis, config)?;

    Ok(BalanceReport {
        format: REPORT_FORMAT.to_string(),
        engine_version: ENGINE_VERSION.to_string(),
        era: era.clone(),
        era_registry_hash,
        config: ConfigEcho::new(config),
        totals: Totals {
            logs: logs.len(),
            player_slots: total_slots as usize,
            encounters: grouped.len(),
        },
        symmetry,
        difficulty,
        viability,
        builds,
        popularity,
        popularity_shift,
        fairness,
        distributions,
    })
}

fn summarize(d: &PerformanceDistribution, config: &MetricsConfig) -> DistributionSummary {
    DistributionSummary {
        encounter: d.encounter_id().to_string(),
        build: d.key().clone(),
        n: d.n(),
        min: d.min(),
        q1: d.lower_quartile(),
        median: d.median(),
        q3: d.upper_quartile(),
        max: d.max(),
        cloud: subsample(d, config.cloud_size, config.cloud_seed).samples().to_vec(),
    }
}

fn aggregate_difficulty(
    analysis: &BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>>,
    config: &MetricsConfig,
) -> Result<Vec<DifficultyEntry>, ReportError> {
    let rules = config.dominance.rules();
    // build -> (weighted score sum, samples, encounters)
    let mut acc: BTreeMap<&BuildKey, (f64, usize, usize)> = BTreeMap::new();
    for builds in analysis.values() {
        for (key, d) in builds {
            let score = match difficulty_score(d, config.difficulty, &rules) {
                Ok(s) => s,
                Err(MetricError::ZeroMedian(_)) => continue,
                Err(e) => return Err(e.into()),
            };
            let e = acc.entry(key).or_default();
            e.0 += score * d.n() as f64;
            e.1 += d.n();
            e.2 += 1;
        }
    }
    let mut out: Vec<DifficultyEntry> = acc
        .into_iter()
        .map(|(k, (sum, n, encounters))| DifficultyEntry {
            build: k.clone(),
            score: sum / n as f64,
            n,
            encounters,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.build.cmp(&b.build)));
    Ok(out)
}

fn summarize_builds(
    analysis: &BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>>,
) -> Vec<BuildSummary> {
    // build -> (median sum, percentile sum, samples, encounters), sample-weighted
    let mut acc: BTreeMap<&BuildKey, (f64, f64, usize, usize)> = BTreeMap::new();
    for builds in analysis.values() {
        let medians: Vec<f64> = builds.values().map(|d| d.median()).collect();
        let ranks = stats::average_ranks(&medians);
        let k = builds.len();
        for ((key, d), rank) in builds.iter().zip(ranks) {
            let pct = if k > 1 { (rank - 1.0) / (k - 1) as f64 } else { 0.5 };
            let w = d.n() as f64;
            let e = acc.entry(key).or_default();
            e.0 += d.median() * w;
            e.1 += pct * w;
            e.2 += d.n();
            e.3 += 1;
        }
    }
    acc.into_iter()
        .map(|(k, (m, p, n, encounters))| BuildSummary {
            build: k.clone(),
            n,
            encounters,
            median_dps: m / n as f64,
            median_percentile: p / n as f64,
        })
        .collect()
}

fn fairness_entries(
    logs: &[CombatLog],
    analysis: &BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>>,
    config: &MetricsConfig,
) -> Result<Vec<FairnessEntry>, ReportError> {
    let baselines = encounter_baselines(logs);
    let mut classified: BTreeMap<&str, Vec<(bool, Vec<BuildKey>)>> = BTreeMap::new();
    for log in logs {
        let keys = classify_log(log, baselines[&log.encounter_id], &config.thresholds)?;
        classified
            .entry(log.encounter_id.as_str())
            .or_default()
            .push((log.success, keys));
    }
    let mut out = Vec::new();
    for (enc, builds) in analysis {
        let Some(attempts) = classified.get(enc.as_str()) else { continue };
        for key in builds.keys() {
            match crate::metrics::fairness_over(attempts, key, config.dominance.min_n) {
                Ok(f) => out.push(FairnessEntry {
                    encounter: enc.clone(),
                    build: key.clone(),
                    delta: f.delta,
                    n_with: f.n_with,
                    n_without: f.n_without,
                    label: FAIRNESS_LABEL.to_string(),
                }),
                Err(MetricError::InsufficientSamples { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(out)
}
