//! Joins survey votes and scale scores with the data-driven report.
//!
//! The agreement classifier is an operationalization: it turns a narrative
//! comparison between what players ask for and what the data shows into a
//! fixed rule, and outputs say so.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::BuildKey;
use crate::report::BalanceReport;
use crate::stats;

pub const ALIGNMENT_FORMAT: &str = "alignment-report/1";
pub const ALIGNMENT_NOTE: &str =
    "operationalized comparison; thresholds are configuration, not findings";

#[derive(Debug, Error, PartialEq)]
pub enum ReconcileError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 pairs, got {0}")]
    TooShort(usize),
    #[error("ranks have zero variance")]
    DegenerateRanks,
    #[error("only {0} builds appear in both the report and the votes above the floor; need 3")]
    InsufficientOverlap(usize),
    #[error("only {0} builds have both a difficulty score and a median; need 3")]
    TooFewBuilds(usize),
}

/// Pearson correlation of average ranks.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, ReconcileError> {
    if xs.len() != ys.len() {
        return Err(ReconcileError::LengthMismatch(xs.len(), ys.len()));
    }
    if xs.len() < 3 {
        return Err(ReconcileError::TooShort(xs.len()));
    }
    stats::pearson(&stats::average_ranks(xs), &stats::average_ranks(ys))
        .ok_or(ReconcileError::DegenerateRanks)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteDirection {
    Nerf,
    Buff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    Agree,
    Disagree,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRow {
    pub build: BuildKey,
    pub nerf_share: f64,
    pub buff_share: f64,
    pub direction: Option<VoteDirection>,
    pub median_percentile: f64,
    pub dominated_count: usize,
    pub dominates_others: bool,
    pub alignment: Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentTable {
    pub vote_floor: f64,
    pub rows: Vec<AlignmentRow>,
    /// Spearman of nerf share against median-dps percentile over the rows;
    /// absent when either side has no rank variance.
    pub nerf_percentile_spearman: Option<f64>,
}

/// Classifies each build present in both the report and the votes.
///
/// A build's direction is whichever share is larger, provided it reaches
/// `vote_floor`; ties go to nerf. Builds under the floor are Neutral.
pub fn vote_alignment(
    nerf_shares: &BTreeMap<BuildKey, f64>,
    buff_shares: &BTreeMap<BuildKey, f64>,
    report: &BalanceReport,
    vote_floor: f64,
) -> Result<AlignmentTable, ReconcileError> {
    let voted: BTreeSet<&BuildKey> = nerf_shares.keys().chain(buff_shares.keys()).collect();
    let dominators: BTreeSet<&BuildKey> = report
        .viability
        .iter()
        .flat_map(|v| v.dominated_by.iter().map(|d| &d.dominator))
        .collect();
    let dominated: BTreeMap<&BuildKey, usize> = report
        .viability
        .iter()
        .map(|v| (&v.build, v.dominated_count))
        .collect();
    let mut counts: Vec<f64> = report.viability.iter().map(|v| v.dominated_count as f64).collect();
    counts.sort_by(f64::total_cmp);
    let median_count = if counts.is_empty() { 0.0 } else { stats::sorted_quantile(&counts, 0.5) };

    let mut rows = Vec::new();
    for summary in &report.builds {
        let key = &summary.build;
        if !voted.contains(key) {
            continue;
        }
        let nerf = nerf_shares.get(key).copied().unwrap_or(0.0);
        let buff = buff_shares.get(key).copied().unwrap_or(0.0);
        let direction = if nerf.max(buff) < vote_floor {
            None
        } else if nerf >= buff {
            Some(VoteDirection::Nerf)
        } else {
            Some(VoteDirection::Buff)
        };
        let dominated_count = dominated.get(key).copied().unwrap_or(0);
        let dominates_others = dominators.contains(key);
        let pct = summary.median_percentile;
        let agrees = match direction {
            None => None,
            Some(VoteDirection::Nerf) => Some(pct >= 0.5 || (dominated_count == 0 && dominates_others)),
            Some(VoteDirection::Buff) => Some(pct <= 0.5 || dominated_count as f64 > median_count),
        };
        rows.push(AlignmentRow {
            build: key.clone(),
            nerf_share: nerf,
            buff_share: buff,
            direction,
            median_percentile: pct,
            dominated_count,
            dominates_others,
            alignment: match agrees {
                None => Alignment::Neutral,
                Some(true) => Alignment::Agree,
                Some(false) => Alignment::Disagree,
            },
        });
    }
    let above = rows.iter().filter(|r| r.direction.is_some()).count();
    if above < 3 {
        return Err(ReconcileError::InsufficientOverlap(above));
    }
    let nerf: Vec<f64> = rows.iter().map(|r| r.nerf_share).collect();
    let pct: Vec<f64> = rows.iter().map(|r| r.median_percentile).collect();
    Ok(AlignmentTable {
        vote_floor,
        rows,
        nerf_percentile_spearman: spearman(&nerf, &pct).ok(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFlag {
    OverRewardedEase,
    UnderRewardedDifficulty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardResidual {
    pub build: BuildKey,
    pub difficulty: f64,
    pub median_dps: f64,
    /// rank(median dps) - rank(difficulty), average ranks, ascending.
    pub residual: f64,
    pub flag: Option<RewardFlag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardConsistency {
    /// Spearman of difficulty against median dps; absent when degenerate.
    pub rho: Option<f64>,
    pub threshold: f64,
    pub builds: Vec<RewardResidual>,
}

impl RewardConsistency {
    pub fn flagged(&self) -> impl Iterator<Item = (&BuildKey, f64, RewardFlag)> {
        self.builds
            .iter()
            .filter_map(|b| b.flag.map(|f| (&b.build, b.residual, f)))
    }
}

/// Whether harder builds pay off in damage, from the report's difficulty and
/// build summaries. `threshold` defaults to K/4.
pub fn difficulty_reward_consistency(
    report: &BalanceReport,
    threshold: Option<f64>,
) -> Result<RewardConsistency, ReconcileError> {
    let dps: BTreeMap<&BuildKey, f64> =
        report.builds.iter().map(|b| (&b.build, b.median_dps)).collect();
    let joined: Vec<(BuildKey, f64, f64)> = report
        .difficulty
        .iter()
        .filter_map(|d| dps.get(&d.build).map(|&m| (d.build.clone(), d.score, m)))
        .collect();
    consistency_from_scores(joined, threshold)
}

/// Same as [`difficulty_reward_consistency`] over explicit
/// `(build, difficulty, median dps)` triples.
pub fn consistency_from_scores(
    mut entries: Vec<(BuildKey, f64, f64)>,
    threshold: Option<f64>,
) -> Result<RewardConsistency, ReconcileError> {
    if entries.len() < 3 {
        return Err(ReconcileError::TooFewBuilds(entries.len()));
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    let k = entries.len();
    let r = threshold.unwrap_or(k as f64 / 4.0);
    let diff: Vec<f64> = entries.iter().map(|e| e.1).collect();
    let dps: Vec<f64> = entries.iter().map(|e| e.2).collect();
    let rd = stats::average_ranks(&diff);
    let rp = stats::average_ranks(&dps);
    let builds = entries
        .into_iter()
        .zip(rd.iter().zip(&rp))
        .map(|((build, difficulty, median_dps), (rd, rp))| {
            let residual = rp - rd;
            let flag = if residual > r {
                Some(RewardFlag::OverRewardedEase)
            } else if residual < -r {
                Some(RewardFlag::UnderRewardedDifficulty)
            } else {
                None
            };
            RewardResidual { build, difficulty, median_dps, residual, flag }
        })
        .collect();
    Ok(RewardConsistency {
        rho: spearman(&diff, &dps).ok(),
        threshold: r,
        builds,
    })
}
