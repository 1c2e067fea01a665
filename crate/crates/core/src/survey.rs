//! Player-survey statistics: minimum sample size, Likert item summaries,
//! discriminant validity, Fleiss' kappa and buff/nerf vote shares.
//!
//! Missing responses are handled by pairwise deletion throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SurveyError {
    #[error("argument `{0}` out of range")]
    OutOfRange(&'static str),
    #[error("item `{0}` has fewer than 2 responses")]
    TooFewResponses(String),
    #[error("zero variance in `{0}`")]
    DegenerateColumn(String),
    #[error("fewer than 3 complete response pairs for `{0}`")]
    TooFewParticipants(String),
    #[error("coder matrix incomplete at unit {unit}")]
    IncompleteMatrix { unit: usize },
    #[error("kappa undefined: expected agreement is 1 (a single category used)")]
    DegenerateAgreement,
    #[error("need at least {0}")]
    TooSmall(&'static str),
    #[error("dataset has no participants")]
    EmptyDataset,
    #[error("survey input: {0}")]
    Input(String),
}

const LIKERT_RANGE: std::ops::RangeInclusive<u8> = 1..=7;

/// Minimum sample size for estimating a proportion.
///
/// `n0 = ceil(z^2 p (1 - p) / margin^2)` with `z` the two-sided normal
/// quantile for `confidence`; with a population size `N` the finite-population
/// correction `ceil(n0 / (1 + (n0 - 1) / N))` is applied.
pub fn cochran_min_sample(
    confidence: f64,
    margin: f64,
    p: f64,
    population: Option<u64>,
) -> Result<u64, SurveyError> {
    let open_unit = |v: f64| v > 0.0 && v < 1.0;
    if !open_unit(confidence) {
        return Err(SurveyError::OutOfRange("confidence"));
    }
    if !open_unit(margin) {
        return Err(SurveyError::OutOfRange("margin"));
    }
    if !open_unit(p) {
        return Err(SurveyError::OutOfRange("p"));
    }
    if population == Some(0) {
        return Err(SurveyError::OutOfRange("population"));
    }
    let z = stats::normal_quantile(1.0 - (1.0 - confidence) / 2.0);
    let n0 = (z * z * p * (1.0 - p) / (margin * margin)).ceil().max(1.0);
    let n = match population {
        None => n0,
        Some(big_n) => (n0 / (1.0 + (n0 - 1.0) / big_n as f64)).ceil(),
    };
    Ok(n as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikertSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl LikertSummary {
    /// One-decimal presentation, e.g. `M=6.7, SD=0.8`.
    pub fn display(&self) -> String {
        format!("M={:.1}, SD={:.1}", self.mean, self.sd)
    }
}

pub fn likert_summary(responses: &[Option<u8>], item: &str) -> Result<LikertSummary, SurveyError> {
    let xs: Vec<f64> = responses.iter().flatten().map(|&r| r as f64).collect();
    if xs.len() < 2 {
        return Err(SurveyError::TooFewResponses(item.to_string()));
    }
    Ok(LikertSummary {
        n: xs.len(),
        mean: stats::mean(&xs),
        sd: stats::sample_variance(&xs).sqrt(),
    })
}

/// Likert responses, scale membership, votes and coder labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SurveyDataset {
    /// Item ids in column order.
    pub items: Vec<String>,
    /// Scale name -> member items. Every item belongs to exactly one scale.
    pub scales: BTreeMap<String, Vec<String>>,
    /// participant x item, `None` when missing.
    pub responses: Vec<Vec<Option<u8>>>,
    /// Per participant: builds marked for nerf and for buff.
    pub votes: Vec<Votes>,
    pub raters: Vec<String>,
    /// unit x rater category labels.
    pub coder_labels: Vec<Vec<Option<String>>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Votes {
    pub nerf: Vec<String>,
    pub buff: Vec<String>,
}

impl SurveyDataset {
    /// Checks that responses are on the 7-point scale and that scales
    /// partition the items.
    pub fn validate(&self) -> Result<(), SurveyError> {
        let mut seen = BTreeSet::new();
        for (scale, members) in &self.scales {
            if members.is_empty() {
                return Err(SurveyError::Input(format!("scale `{scale}` has no items")));
            }
            for m in members {
                if !self.items.contains(m) {
                    return Err(SurveyError::Input(format!("scale `{scale}` lists unknown item `{m}`")));
                }
                if !seen.insert(m) {
                    return Err(SurveyError::Input(format!("item `{m}` is in more than one scale")));
                }
            }
        }
        if let Some(orphan) = self.items.iter().find(|i| !seen.contains(i)) {
            return Err(SurveyError::Input(format!("item `{orphan}` belongs to no scale")));
        }
        for (row, r) in self.responses.iter().enumerate() {
            if r.len() != self.items.len() {
                return Err(SurveyError::Input(format!("participant {row} has {} responses", r.len())));
            }
            if r.iter().flatten().any(|v| !LIKERT_RANGE.contains(v)) {
                return Err(SurveyError::Input(format!("participant {row} has a response outside 1..7")));
            }
        }
        Ok(())
    }

    pub fn participants(&self) -> usize {
        self.responses.len().max(self.votes.len())
    }

    pub fn item_column(&self, item: &str) -> Option<Vec<Option<u8>>> {
        let idx = self.items.iter().position(|i| i == item)?;
        Some(self.responses.iter().map(|r| r[idx]).collect())
    }

    pub fn scale_of(&self, item: &str) -> Option<&str> {
        self.scales
            .iter()
            .find(|(_, members)| members.iter().any(|m| m == item))
            .map(|(s, _)| s.as_str())
    }

    /// Per participant mean of a scale's non-missing items.
    fn composite(&self, scale: &str) -> Vec<Option<f64>> {
        let idx: Vec<usize> = self.scales[scale]
            .iter()
            .map(|m| self.items.iter().position(|i| i == m).expect("validated"))
            .collect();
        self.responses
            .iter()
            .map(|r| {
                let vals: Vec<f64> = idx.iter().filter_map(|&i| r[i]).map(f64::from).collect();
                (!vals.is_empty()).then(|| stats::mean(&vals))
            })
            .collect()
    }

    /// Reads a participant table and a scale sidecar.
    ///
    /// The table is comma-separated with a header. Columns named in the
    /// sidecar are Likert items; `nerf` and `buff` hold `;`-separated build
    /// labels; `coder_<name>` columns hold one rater's category per
    /// participant; `participant` is ignored. `NA` or an empty cell means
    /// missing. The sidecar is TOML mapping scale names to item lists.
    pub fn load(data: &Path, scales: &Path) -> Result<Self, SurveyError> {
        let scales_text = std::fs::read_to_string(scales)
            .map_err(|e| SurveyError::Input(format!("{}: {e}", scales.display())))?;
        let scales: BTreeMap<String, Vec<String>> = toml::from_str(&scales_text)
            .map_err(|e| SurveyError::Input(format!("{}: {e}", scales.display())))?;
        let data_text = std::fs::read_to_string(data)
            .map_err(|e| SurveyError::Input(format!("{}: {e}", data.display())))?;
        Self::parse(&data_text, scales)
    }

    pub fn parse(table: &str, scales: BTreeMap<String, Vec<String>>) -> Result<Self, SurveyError> {
        let input = |e: csv::Error| SurveyError::Input(e.to_string());
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(table.as_bytes());
        let header: Vec<String> = reader.headers().map_err(input)?.iter().map(str::to_string).collect();
        let scale_items: BTreeSet<&String> = scales.values().flatten().collect();

        enum Col {
            Item,
            Nerf,
            Buff,
            Coder,
            Skip,
        }
        let mut kinds = Vec::new();
        let mut ds = SurveyDataset {
            scales: scales.clone(),
            ..Default::default()
        };
        for h in &header {
            let kind = if scale_items.contains(h) {
                ds.items.push(h.clone());
                Col::Item
            } else if h == "nerf" {
                Col::Nerf
            } else if h == "buff" {
                Col::Buff
            } else if let Some(name) = h.strip_prefix("coder_") {
                ds.raters.push(name.to_string());
                Col::Coder
            } else if h == "participant" {
                Col::Skip
            } else {
                return Err(SurveyError::Input(format!("unknown column `{h}`")));
            };
            kinds.push(kind);
        }
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(input)?;
            let mut responses = Vec::new();
            let mut votes = Votes::default();
            let mut labels = Vec::new();
            for (cell, kind) in record.iter().zip(&kinds) {
                let missing = cell.is_empty() || cell == "NA";
                match kind {
                    Col::Item if missing => responses.push(None),
                    Col::Item => {
                        let v: u8 = cell.parse().map_err(|_| {
                            SurveyError::Input(format!("row {}: `{cell}` is not a response", row + 2))
                        })?;
                        responses.push(Some(v));
                    }
                    Col::Nerf | Col::Buff => {
                        let list: Vec<String> = if missing {
                            Vec::new()
                        } else {
                            cell.split(';').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect()
                        };
                        if matches!(kind, Col::Nerf) {
                            votes.nerf = list;
                        } else {
                            votes.buff = list;
                        }
                    }
                    Col::Coder => labels.push((!missing).then(|| cell.to_string())),
                    Col::Skip => {}
                }
            }
            ds.responses.push(responses);
            ds.votes.push(votes);
            if !ds.raters.is_empty() {
                ds.coder_labels.push(labels);
            }
        }
        ds.validate()?;
        Ok(ds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemValidity {
    pub item: String,
    pub scale: String,
    /// Mean |r| against the composites of every other scale.
    pub r_d: f64,
}

/// How an item's correlations with the other scales' composites collapse to
/// one r_d value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RdEstimator {
    /// Mean of |r| over the other scales.
    #[default]
    MeanAbsOtherScales,
    /// Largest |r| over the other scales; the more conservative reading.
    MaxAbsOtherScales,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminantValidity {
    pub estimator: RdEstimator,
    pub items: Vec<ItemValidity>,
    pub overall: f64,
}

/// Item-versus-other-scale-composite correlations.
///
/// For item `i` in scale `S`, `r_d(i)` is the mean over every other scale `T`
/// of `|pearson(i, composite(T))|`, where `composite(T)` is a participant's
/// mean over the non-missing items of `T` and pairs with a missing side are
/// dropped. `overall` is the mean of all `r_d(i)`.
pub fn discriminant_validity(ds: &SurveyDataset) -> Result<DiscriminantValidity, SurveyError> {
    discriminant_validity_with(ds, RdEstimator::default())
}

pub fn discriminant_validity_with(
    ds: &SurveyDataset,
    estimator: RdEstimator,
) -> Result<DiscriminantValidity, SurveyError> {
    ds.validate()?;
    if ds.scales.len() < 2 {
        return Err(SurveyError::TooSmall("two scales"));
    }
    let composites: BTreeMap<&str, Vec<Option<f64>>> = ds
        .scales
        .keys()
        .map(|s| (s.as_str(), ds.composite(s)))
        .collect();
    let mut items = Vec::new();
    for (scale, members) in &ds.scales {
        for item in members {
            let col = ds.item_column(item).expect("validated");
            let mut rs = Vec::new();
            for (other, comp) in &composites {
                if *other == scale {
                    continue;
                }
                let (xs, ys): (Vec<f64>, Vec<f64>) = col
                    .iter()
                    .zip(comp)
                    .filter_map(|(x, y)| Some((f64::from((*x)?), (*y)?)))
                    .unzip();
                if xs.len() < 3 {
                    return Err(SurveyError::TooFewParticipants(format!("{item} vs {other}")));
                }
                let r = stats::pearson(&xs, &ys).ok_or_else(|| {
                    let which = if stats::sample_variance(&xs) == 0.0 { item.clone() } else { format!("scale {other}") };
                    SurveyError::DegenerateColumn(which)
                })?;
                rs.push(r.abs());
            }
            items.push(ItemValidity {
                item: item.clone(),
                scale: scale.clone(),
                r_d: match estimator {
                    RdEstimator::MeanAbsOtherScales => stats::mean(&rs),
                    RdEstimator::MaxAbsOtherScales => rs.iter().copied().fold(0.0, f64::max),
                },
            });
        }
    }
    let overall = stats::mean(&items.iter().map(|i| i.r_d).collect::<Vec<_>>());
    Ok(DiscriminantValidity { estimator, items, overall })
}

/// Fleiss' kappa over `units x raters` category labels.
pub fn fleiss_kappa<S: AsRef<str>>(labels: &[Vec<Option<S>>]) -> Result<f64, SurveyError> {
    let n = labels.len();
    if n < 2 {
        return Err(SurveyError::TooSmall("two units"));
    }
    let r = labels[0].len();
    if r < 2 {
        return Err(SurveyError::TooSmall("two raters"));
    }
    let mut categories: BTreeMap<&str, usize> = BTreeMap::new();
    for (unit, row) in labels.iter().enumerate() {
        if row.len() != r || row.iter().any(Option::is_none) {
            return Err(SurveyError::IncompleteMatrix { unit });
        }
        for label in row.iter().flatten() {
            let next = categories.len();
            categories.entry(label.as_ref()).or_insert(next);
        }
    }
    let k = categories.len();
    let mut totals = vec![0usize; k];
    let mut p_bar = 0.0;
    for row in labels {
        let mut counts = vec![0usize; k];
        for label in row.iter().flatten() {
            counts[categories[label.as_ref()]] += 1;
        }
        let sum_sq: usize = counts.iter().map(|c| c * c).sum();
        p_bar += (sum_sq - r) as f64 / (r * (r - 1)) as f64;
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
    }
    p_bar /= n as f64;
    let cells = (n * r) as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / cells).powi(2)).sum();
    if k < 2 || (1.0 - p_e).abs() < 1e-15 {
        return Err(SurveyError::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteShare {
    pub build: String,
    pub participants: usize,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteTally {
    pub nerf: Vec<VoteShare>,
    pub buff: Vec<VoteShare>,
}

/// Share of participants naming each build, per direction. A participant
/// counts once per build and direction.
pub fn tally_votes(ds: &SurveyDataset) -> Result<VoteTally, SurveyError> {
    let total = ds.participants();
    if total == 0 {
        return Err(SurveyError::EmptyDataset);
    }
    let tally = |pick: fn(&Votes) -> &Vec<String>| {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for v in &ds.votes {
            let unique: BTreeSet<&str> = pick(v).iter().map(String::as_str).collect();
            for b in unique {
                *counts.entry(b).or_default() += 1;
            }
        }
        let mut shares: Vec<VoteShare> = counts
            .into_iter()
            .map(|(b, c)| VoteShare {
                build: b.to_string(),
                participants: c,
                share: c as f64 / total as f64,
            })
            .collect();
        shares.sort_by(|a, b| b.participants.cmp(&a.participants).then_with(|| a.build.cmp(&b.build)));
        shares
    };
    Ok(VoteTally {
        nerf: tally(|v| &v.nerf),
        buff: tally(|v| &v.buff),
    })
}
