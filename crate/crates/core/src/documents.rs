//! Survey and alignment report documents.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::BuildKey;
use crate::reconcile::{
    difficulty_reward_consistency, vote_alignment, AlignmentTable, ReconcileError,
    RewardConsistency, ALIGNMENT_FORMAT, ALIGNMENT_NOTE,
};
use crate::report::{parse_versioned, render_sorted, BalanceReport, ReportError, ENGINE_VERSION};
use crate::survey::{
    cochran_min_sample, discriminant_validity_with, fleiss_kappa, likert_summary, tally_votes,
    DiscriminantValidity, LikertSummary, RdEstimator, SurveyDataset, SurveyError, VoteTally,
};

pub const SURVEY_FORMAT: &str = "survey-report/1";

/// A statistic that may be undefined for the given data. Sections fail
/// individually so one degenerate column does not hide the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome<T> {
    Value(T),
    Error(String),
}

impl<T> Outcome<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Outcome::Value(v) => Some(v),
            Outcome::Error(_) => None,
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Outcome<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Outcome::Value(v),
            Err(e) => Outcome::Error(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizing {
    pub confidence: f64,
    pub margin: f64,
    pub proportion: f64,
    pub population: Option<u64>,
    pub required: Outcome<u64>,
    pub achieved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemSummary {
    pub item: String,
    pub scale: String,
    pub summary: Outcome<LikertSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyReport {
    pub format: String,
    pub engine_version: String,
    pub participants: usize,
    pub sample_sizing: SampleSizing,
    pub items: Vec<ItemSummary>,
    pub scales: BTreeMap<String, Vec<String>>,
    pub discriminant_validity: Outcome<DiscriminantValidity>,
    pub raters: Vec<String>,
    /// Absent when the data has no coder columns.
    pub fleiss_kappa: Option<Outcome<f64>>,
    pub votes: VoteTally,
}

impl SurveyReport {
    pub fn render(&self) -> String {
        render_sorted(self)
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        parse_versioned(text, SURVEY_FORMAT)
    }
}

/// Sizing at 95% confidence, 5% margin and p = 0.5, item summaries, scale
/// validity, coder agreement and vote shares.
pub fn survey_report(
    ds: &SurveyDataset,
    population: Option<u64>,
    estimator: RdEstimator,
) -> Result<SurveyReport, SurveyError> {
    ds.validate()?;
    let votes = tally_votes(ds)?;
    let items = ds
        .items
        .iter()
        .map(|item| ItemSummary {
            item: item.clone(),
            scale: ds.scale_of(item).unwrap_or_default().to_string(),
            summary: likert_summary(&ds.item_column(item).unwrap_or_default(), item).into(),
        })
        .collect();
    let fleiss = if ds.raters.is_empty() {
        None
    } else {
        // Units nobody coded carry no agreement information.
        let coded: Vec<&Vec<Option<String>>> =
            ds.coder_labels.iter().filter(|row| row.iter().any(Option::is_some)).collect();
        let rows: Vec<Vec<Option<&str>>> = coded
            .iter()
            .map(|row| row.iter().map(|c| c.as_deref()).collect())
            .collect();
        Some(fleiss_kappa(&rows).into())
    };
    Ok(SurveyReport {
        format: SURVEY_FORMAT.to_string(),
        engine_version: ENGINE_VERSION.to_string(),
        participants: ds.participants(),
        sample_sizing: SampleSizing {
            confidence: 0.95,
            margin: 0.05,
            proportion: 0.5,
            population,
            required: cochran_min_sample(0.95, 0.05, 0.5, population).into(),
            achieved: ds.participants(),
        },
        items,
        scales: ds.scales.clone(),
        discriminant_validity: discriminant_validity_with(ds, estimator).into(),
        raters: ds.raters.clone(),
        fleiss_kappa: fleiss,
        votes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub format: String,
    pub engine_version: String,
    pub note: String,
    pub era: String,
    pub era_registry_hash: String,
    /// Vote tokens that are not build labels.
    pub unmatched_votes: Vec<String>,
    pub votes: Outcome<AlignmentTable>,
    pub difficulty_reward: Outcome<RewardConsistency>,
}

impl AlignmentReport {
    pub fn render(&self) -> String {
        render_sorted(self)
    }

    pub fn parse(text: &str) -> Result<Self, ReportError> {
        parse_versioned(text, ALIGNMENT_FORMAT)
    }
}

pub fn alignment_report(report: &BalanceReport, survey: &SurveyReport, vote_floor: f64) -> AlignmentReport {
    let mut unmatched = Vec::new();
    let mut shares = |list: &[crate::survey::VoteShare]| -> BTreeMap<BuildKey, f64> {
        let mut out = BTreeMap::new();
        for v in list {
            match v.build.parse::<BuildKey>() {
                Ok(k) => {
                    out.insert(k, v.share);
                }
                Err(_) => unmatched.push(v.build.clone()),
            }
        }
        out
    };
    let nerf = shares(&survey.votes.nerf);
    let buff = shares(&survey.votes.buff);
    unmatched.sort();
    unmatched.dedup();
    let votes: Result<AlignmentTable, ReconcileError> = vote_alignment(&nerf, &buff, report, vote_floor);
    AlignmentReport {
        format: ALIGNMENT_FORMAT.to_string(),
        engine_version: ENGINE_VERSION.to_string(),
        note: ALIGNMENT_NOTE.to_string(),
        era: report.era.label.clone(),
        era_registry_hash: report.era_registry_hash.clone(),
        unmatched_votes: unmatched,
        votes: votes.into(),
        difficulty_reward: difficulty_reward_consistency(report, None).into(),
    }
}
