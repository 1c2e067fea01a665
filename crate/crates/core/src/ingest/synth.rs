//! Seeded synthetic corpora with a ground-truth manifest.
//!
//! Per-build dps is log-normal: `location * exp(dispersion * z)` with
//! `z ~ N(0, 1)`, so `location` is the true median and `dispersion` the
//! multiplicative sigma. Support roles emit healing or boon output that the
//! default role thresholds recover.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BuildKey, CombatLog, EraId, PlayerRecord, ProfSpec, RoleBucket, MAX_PLAYERS_PER_LOG};

use super::is_safe_name;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticBuild {
    pub key: BuildKey,
    /// True median dps.
    pub location: f64,
    /// Log-scale sigma.
    pub dispersion: f64,
    pub popularity_weight: f64,
    #[serde(default)]
    pub success_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub eras: Vec<EraId>,
    pub encounters: Vec<String>,
    pub builds: Vec<SyntheticBuild>,
    pub logs_per_era: usize,
    #[serde(default = "default_players_per_log")]
    pub players_per_log: usize,
}

fn default_players_per_log() -> usize {
    MAX_PLAYERS_PER_LOG
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.to_string()));
        if self.builds.is_empty() {
            return bad("at least one build is required");
        }
        if self.eras.is_empty() || self.encounters.is_empty() {
            return bad("at least one era and one encounter are required");
        }
        if !(1..=MAX_PLAYERS_PER_LOG).contains(&self.players_per_log) {
            return bad("players_per_log must be in 1..=10");
        }
        for (i, era) in self.eras.iter().enumerate() {
            if !is_safe_name(&era.label) || era.start_utc >= era.end_utc {
                return bad(&format!("era `{}` is invalid", era.label));
            }
            if self.eras[..i].iter().any(|e| e.label == era.label || e.overlaps(era)) {
                return bad(&format!("era `{}` overlaps another era", era.label));
            }
        }
        if let Some(enc) = self.encounters.iter().find(|e| !is_safe_name(e)) {
            return bad(&format!("encounter id `{enc}` is not a safe name"));
        }
        let unique: BTreeSet<&BuildKey> = self.builds.iter().map(|b| &b.key).collect();
        if unique.len() != self.builds.len() {
            return bad("build keys must be unique");
        }
        for b in &self.builds {
            if !(b.location > 0.0 && b.location.is_finite()) {
                return bad(&format!("{}: location must be > 0", b.key));
            }
            if !(b.dispersion >= 0.0 && b.dispersion.is_finite()) {
                return bad(&format!("{}: dispersion must be >= 0", b.key));
            }
            if !(b.popularity_weight >= 0.0 && b.popularity_weight.is_finite()) {
                return bad(&format!("{}: popularity_weight must be >= 0", b.key));
            }
            if !(-1.0..=1.0).contains(&b.success_bonus) {
                return bad(&format!("{}: success_bonus must be in [-1, 1]", b.key));
            }
        }
        if self.builds.iter().all(|b| b.popularity_weight == 0.0) {
            return bad("popularity weights are all zero");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueBuild {
    pub key: BuildKey,
    pub median: f64,
    pub dispersion: f64,
    pub popularity_share: f64,
    pub success_bonus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthManifest {
    pub seed: u64,
    pub builds: Vec<TrueBuild>,
    /// Builds ordered by ascending dispersion (ties by key).
    pub dispersion_order: Vec<BuildKey>,
    /// Expected slot shares per (profession, specialization).
    pub popularity_shares: BTreeMap<ProfSpec, f64>,
    pub logs_per_era: usize,
    pub players_per_log: usize,
    pub success_model: String,
}

const SUCCESS_BASE: f64 = 0.5;
const SUCCESS_CLAMP: (f64, f64) = (0.05, 0.95);

pub fn generate_synthetic(
    spec: &SyntheticSpec,
) -> Result<(Vec<CombatLog>, GroundTruthManifest), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let weights = WeightedIndex::new(spec.builds.iter().map(|b| b.popularity_weight))
        .map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
    let max_location = spec
        .builds
        .iter()
        .map(|b| b.location)
        .fold(0.0_f64, f64::max);

    let mut logs = Vec::with_capacity(spec.eras.len() * spec.logs_per_era);
    for era in &spec.eras {
        let span = (era.end_utc - era.start_utc) as i128;
        for i in 0..spec.logs_per_era {
            let offset = span * i as i128 / spec.logs_per_era as i128;
            let encounter = &spec.encounters[rng.random_range(0..spec.encounters.len())];
            let mut present = BTreeSet::new();
            let mut players = Vec::with_capacity(spec.players_per_log);
            for _ in 0..spec.players_per_log {
                let idx = weights.sample(&mut rng);
                present.insert(idx);
                players.push(draw_player(&spec.builds[idx], max_location, &mut rng));
            }
            let mean_bonus = present
                .iter()
                .map(|&i| spec.builds[i].success_bonus)
                .sum::<f64>()
                / present.len() as f64;
            let p = (SUCCESS_BASE + mean_bonus).clamp(SUCCESS_CLAMP.0, SUCCESS_CLAMP.1);
            let success = rng.random::<f64>() < p;
            let duration_s = rng.random_range(60.0..600.0);
            logs.push(CombatLog {
                log_id: format!("{}-{i:07}", era.label),
                encounter_id: encounter.clone(),
                patch_era: era.label.clone(),
                timestamp_utc: era.start_utc + offset as i64,
                success,
                duration_s,
                players,
            });
        }
    }
    Ok((logs, manifest(spec)))
}

fn draw_player(build: &SyntheticBuild, max_location: f64, rng: &mut ChaCha8Rng) -> PlayerRecord {
    let z: f64 = rng.sample(StandardNormal);
    let dps = if build.dispersion == 0.0 {
        build.location
    } else {
        build.location * (build.dispersion * z).exp()
    };
    let (condition_share, healing_ps, boon_ps) = match build.key.role() {
        RoleBucket::DirectDamage => (0.0, 0.0, 0.0),
        RoleBucket::DamageOverTime => (0.85, 0.0, 0.0),
        RoleBucket::OffensiveSupport => (0.3, 0.0, 0.5 * max_location),
        RoleBucket::FullSupport => (0.3, max_location, 0.0),
    };
    let condition_dps = dps * condition_share;
    PlayerRecord {
        account_hash: format!("{:016x}", rng.random::<u64>()),
        profession: build.key.profession().to_string(),
        specialization: build.key.specialization().map(str::to_string),
        dps,
        power_dps: dps - condition_dps,
        condition_dps,
        healing_ps,
        boon_ps,
    }
}

fn manifest(spec: &SyntheticSpec) -> GroundTruthManifest {
    let total: f64 = spec.builds.iter().map(|b| b.popularity_weight).sum();
    let builds: Vec<TrueBuild> = spec
        .builds
        .iter()
        .map(|b| TrueBuild {
            key: b.key.clone(),
            median: b.location,
            dispersion: b.dispersion,
            popularity_share: b.popularity_weight / total,
            success_bonus: b.success_bonus,
        })
        .collect();
    let mut order: Vec<&TrueBuild> = builds.iter().collect();
    order.sort_by(|a, b| a.dispersion.total_cmp(&b.dispersion).then_with(|| a.key.cmp(&b.key)));
    let mut popularity_shares: BTreeMap<ProfSpec, f64> = BTreeMap::new();
    for b in &builds {
        *popularity_shares.entry(b.key.prof_spec()).or_default() += b.popularity_share;
    }
    GroundTruthManifest {
        seed: spec.seed,
        dispersion_order: order.iter().map(|b| b.key.clone()).collect(),
        builds,
        popularity_shares,
        logs_per_era: spec.logs_per_era,
        players_per_log: spec.players_per_log,
        success_model: format!(
            "p = clamp({SUCCESS_BASE} + mean success_bonus of distinct builds present, {}, {})",
            SUCCESS_CLAMP.0, SUCCESS_CLAMP.1
        ),
    }
}
