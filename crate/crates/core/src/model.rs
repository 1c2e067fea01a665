//! Shared domain types: build identities, role buckets, combat logs, patch eras
//! and sorted performance distributions.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("profession must not be blank")]
    EmptyProfession,
    #[error("unknown role bucket `{0}`")]
    UnknownRole(String),
    #[error("malformed build key `{0}` (expected profession/specialization/role)")]
    MalformedBuildKey(String),
    #[error("era `{label}` has start {start} not before end {end}")]
    EmptyEraInterval { label: String, start: i64, end: i64 },
    #[error("distribution needs at least one finite sample")]
    EmptyDistribution,
}

/// The coarse function a player serves in a group.
///
/// Declaration order is the ordering used inside [`BuildKey`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleBucket {
    FullSupport,
    OffensiveSupport,
    DirectDamage,
    DamageOverTime,
}

impl RoleBucket {
    pub const ALL: [RoleBucket; 4] = [
        RoleBucket::FullSupport,
        RoleBucket::OffensiveSupport,
        RoleBucket::DirectDamage,
        RoleBucket::DamageOverTime,
    ];

    /// Short code used in build labels and tabular exports.
    pub fn code(self) -> &'static str {
        match self {
            RoleBucket::FullSupport => "fs",
            RoleBucket::OffensiveSupport => "os",
            RoleBucket::DirectDamage => "dd",
            RoleBucket::DamageOverTime => "dot",
        }
    }

    pub fn is_support(self) -> bool {
        matches!(self, RoleBucket::FullSupport | RoleBucket::OffensiveSupport)
    }
}

impl fmt::Display for RoleBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for RoleBucket {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fs" | "fullsupport" | "full_support" => Ok(RoleBucket::FullSupport),
            "os" | "offensivesupport" | "offensive_support" => Ok(RoleBucket::OffensiveSupport),
            "dd" | "directdamage" | "direct_damage" => Ok(RoleBucket::DirectDamage),
            "dot" | "damageovertime" | "damage_over_time" => Ok(RoleBucket::DamageOverTime),
            _ => Err(ModelError::UnknownRole(s.to_string())),
        }
    }
}

/// Identity under which performances are aggregated.
///
/// Profession and specialization are trimmed and lowercased on construction.
/// An absent specialization is stored as the empty string, so the derived
/// ordering is lexicographic on `(profession, specialization-or-empty, role)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuildKey {
    profession: String,
    specialization: String,
    role: RoleBucket,
}

impl BuildKey {
    pub fn new(
        profession: &str,
        specialization: Option<&str>,
        role: RoleBucket,
    ) -> Result<Self, ModelError> {
        let profession = normalize_name(profession);
        if profession.is_empty() {
            return Err(ModelError::EmptyProfession);
        }
        Ok(BuildKey {
            profession,
            specialization: specialization.map(normalize_name).unwrap_or_default(),
            role,
        })
    }

    pub fn profession(&self) -> &str {
        &self.profession
    }

    /// `None` when the build has no specialization.
    pub fn specialization(&self) -> Option<&str> {
        if self.specialization.is_empty() {
            None
        } else {
            Some(&self.specialization)
        }
    }

    pub fn role(&self) -> RoleBucket {
        self.role
    }

    pub fn prof_spec(&self) -> ProfSpec {
        ProfSpec {
            profession: self.profession.clone(),
            specialization: self.specialization.clone(),
        }
    }
}

/// `profession/specialization/role`, e.g. `engineer/mechanist/dd`.
impl fmt::Display for BuildKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.profession, self.specialization, self.role)
    }
}

impl FromStr for BuildKey {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('/').collect();
        let [profession, specialization, role] = parts[..] else {
            return Err(ModelError::MalformedBuildKey(s.to_string()));
        };
        let role = role.parse()?;
        let specialization = Some(specialization).filter(|s| !s.trim().is_empty());
        BuildKey::new(profession, specialization, role)
    }
}

impl Serialize for BuildKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for BuildKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Convenience wrapper for [`BuildKey::new`].
pub fn make_build_key(
    profession: &str,
    specialization: Option<&str>,
    role: RoleBucket,
) -> Result<BuildKey, ModelError> {
    BuildKey::new(profession, specialization, role)
}

/// A (profession, specialization) pair without role: the unit of popularity.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProfSpec {
    pub profession: String,
    /// Empty when the player runs the core profession.
    pub specialization: String,
}

impl ProfSpec {
    pub fn new(profession: &str, specialization: Option<&str>) -> Self {
        ProfSpec {
            profession: normalize_name(profession),
            specialization: specialization.map(normalize_name).unwrap_or_default(),
        }
    }
}

impl fmt::Display for ProfSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.profession, self.specialization)
    }
}

impl FromStr for ProfSpec {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (profession, specialization) = s.split_once('/').unwrap_or((s, ""));
        if profession.trim().is_empty() {
            return Err(ModelError::EmptyProfession);
        }
        Ok(ProfSpec::new(
            profession,
            Some(specialization).filter(|s| !s.trim().is_empty()),
        ))
    }
}

impl Serialize for ProfSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProfSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn normalize_name(s: &str) -> String {
    s.trim().to_lowercase()
}

/// One player's output in one encounter attempt. Rates are per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerRecord {
    pub account_hash: String,
    pub profession: String,
    pub specialization: Option<String>,
    pub dps: f64,
    pub power_dps: f64,
    pub condition_dps: f64,
    pub healing_ps: f64,
    pub boon_ps: f64,
}

impl PlayerRecord {
    /// Returns the name of the first field violating the record invariants.
    pub fn check(&self) -> Result<(), &'static str> {
        let rates = [
            ("dps", self.dps),
            ("power_dps", self.power_dps),
            ("condition_dps", self.condition_dps),
            ("healing_ps", self.healing_ps),
            ("boon_ps", self.boon_ps),
        ];
        for (name, v) in rates {
            if !v.is_finite() || v < 0.0 {
                return Err(name);
            }
        }
        if self.profession.trim().is_empty() {
            return Err("profession");
        }
        if !dps_decomposes(self.dps, self.power_dps, self.condition_dps) {
            return Err("dps");
        }
        Ok(())
    }

    pub fn prof_spec(&self) -> ProfSpec {
        ProfSpec::new(&self.profession, self.specialization.as_deref())
    }
}

/// `|dps - (power + condition)| <= max(1e-6, 1e-3 * dps)`.
pub fn dps_decomposes(dps: f64, power_dps: f64, condition_dps: f64) -> bool {
    (dps - (power_dps + condition_dps)).abs() <= f64::max(1e-6, 1e-3 * dps)
}

/// A recorded encounter attempt. `patch_era` holds the era label; the store
/// resolves it against its era registry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombatLog {
    pub log_id: String,
    pub encounter_id: String,
    pub patch_era: String,
    pub timestamp_utc: i64,
    pub success: bool,
    pub duration_s: f64,
    pub players: Vec<PlayerRecord>,
}

pub const MAX_PLAYERS_PER_LOG: usize = 10;

/// A balance-patch interval `[start_utc, end_utc)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EraId {
    pub label: String,
    pub start_utc: i64,
    pub end_utc: i64,
}

impl EraId {
    pub fn new(label: &str, start_utc: i64, end_utc: i64) -> Result<Self, ModelError> {
        if start_utc >= end_utc {
            return Err(ModelError::EmptyEraInterval {
                label: label.to_string(),
                start: start_utc,
                end: end_utc,
            });
        }
        Ok(EraId {
            label: label.to_string(),
            start_utc,
            end_utc,
        })
    }

    pub fn contains(&self, ts: i64) -> bool {
        self.start_utc <= ts && ts < self.end_utc
    }

    pub fn overlaps(&self, other: &EraId) -> bool {
        self.start_utc < other.end_utc && other.start_utc < self.end_utc
    }
}

/// Sorted dps samples for one (build, encounter, era) with cached order
/// statistics. The samples are private so the cache can never go stale.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceDistribution {
    key: BuildKey,
    encounter_id: String,
    era: EraId,
    samples: Vec<f64>,
    median: f64,
    quartiles: (f64, f64),
}

impl PerformanceDistribution {
    pub fn new(
        key: BuildKey,
        encounter_id: impl Into<String>,
        era: EraId,
        mut samples: Vec<f64>,
    ) -> Result<Self, ModelError> {
        samples.retain(|v| v.is_finite());
        if samples.is_empty() {
            return Err(ModelError::EmptyDistribution);
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::from_sorted(key, encounter_id.into(), era, samples))
    }

    /// `samples` must be non-empty, finite and ascending.
    pub(crate) fn from_sorted(
        key: BuildKey,
        encounter_id: String,
        era: EraId,
        samples: Vec<f64>,
    ) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.windows(2).all(|w| w[0] <= w[1]));
        let median = stats::sorted_quantile(&samples, 0.5);
        let quartiles = (
            stats::sorted_quantile(&samples, 0.25),
            stats::sorted_quantile(&samples, 0.75),
        );
        PerformanceDistribution {
            key,
            encounter_id,
            era,
            samples,
            median,
            quartiles,
        }
    }

    /// Same context, new samples.
    pub(crate) fn with_sorted_samples(&self, samples: Vec<f64>) -> Self {
        Self::from_sorted(
            self.key.clone(),
            self.encounter_id.clone(),
            self.era.clone(),
            samples,
        )
    }

    pub fn key(&self) -> &BuildKey {
        &self.key
    }

    pub fn encounter_id(&self) -> &str {
        &self.encounter_id
    }

    pub fn era(&self) -> &EraId {
        &self.era
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn median(&self) -> f64 {
        self.median
    }

    pub fn lower_quartile(&self) -> f64 {
        self.quartiles.0
    }

    pub fn upper_quartile(&self) -> f64 {
        self.quartiles.1
    }

    pub fn min(&self) -> f64 {
        self.samples[0]
    }

    pub fn max(&self) -> f64 {
        self.samples[self.samples.len() - 1]
    }

    pub fn same_context(&self, other: &Self) -> bool {
        self.encounter_id == other.encounter_id && self.era == other.era
    }
}

/// Deterministic order used whenever distributions are listed.
pub fn cmp_by_context(a: &PerformanceDistribution, b: &PerformanceDistribution) -> Ordering {
    (&a.era, &a.encounter_id, &a.key).cmp(&(&b.era, &b.encounter_id, &b.key))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn build_key_normalizes() {
        let k = make_build_key("Ranger", Some("Soulbeast"), RoleBucket::DirectDamage).unwrap();
        assert_eq!(k.profession(), "ranger");
        assert_eq!(k.specialization(), Some("soulbeast"));
        assert_eq!(k.role(), RoleBucket::DirectDamage);
        assert_eq!(k.to_string(), "ranger/soulbeast/dd");
    }

    #[test]
    fn build_key_without_specialization() {
        let k = make_build_key("ranger", None, RoleBucket::FullSupport).unwrap();
        assert_eq!(k.specialization(), None);
        assert_eq!(k.to_string(), "ranger//fs");
        assert_eq!("ranger//fs".parse::<BuildKey>().unwrap(), k);
    }

    #[test]
    fn blank_profession_rejected() {
        assert_eq!(
            make_build_key("  ", None, RoleBucket::DirectDamage),
            Err(ModelError::EmptyProfession)
        );
    }

    #[test]
    fn build_key_label_errors() {
        assert!(matches!(
            "ranger/dd".parse::<BuildKey>(),
            Err(ModelError::MalformedBuildKey(_))
        ));
        assert!(matches!(
            "ranger/soulbeast/tank".parse::<BuildKey>(),
            Err(ModelError::UnknownRole(_))
        ));
    }

    #[test]
    fn decomposition_tolerance() {
        assert!(dps_decomposes(1000.0, 600.0, 400.5));
        assert!(!dps_decomposes(1000.0, 600.0, 402.0));
        assert!(dps_decomposes(0.0, 0.0, 5e-7));
        assert!(!dps_decomposes(0.0, 0.0, 2e-6));
    }

    #[test]
    fn era_interval() {
        assert!(EraId::new("e", 5, 5).is_err());
        let a = EraId::new("a", 0, 10).unwrap();
        let b = EraId::new("b", 10, 20).unwrap();
        assert!(!a.overlaps(&b));
        assert!(a.contains(0) && !a.contains(10));
    }

    #[test]
    fn distribution_caches_order_statistics() {
        let era = EraId::new("e", 0, 1).unwrap();
        let key = make_build_key("a", None, RoleBucket::DirectDamage).unwrap();
        let d = PerformanceDistribution::new(key, "b", era, vec![4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(d.samples(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.median(), 2.5);
        assert_eq!(d.lower_quartile(), 1.75);
        assert_eq!(d.upper_quartile(), 3.25);
        assert_eq!((d.min(), d.max(), d.n()), (1.0, 4.0, 4));
    }

    fn arb_key() -> impl Strategy<Value = BuildKey> {
        (
            "[a-c]{1,2}",
            proptest::option::of("[a-c]{0,2}"),
            0usize..4,
        )
            .prop_map(|(p, s, r)| BuildKey::new(&p, s.as_deref(), RoleBucket::ALL[r]).unwrap())
    }

    proptest! {
        #[test]
        fn build_key_order_is_total(a in arb_key(), b in arb_key(), c in arb_key()) {
            // antisymmetry
            if a <= b && b <= a {
                prop_assert_eq!(&a, &b);
            }
            // transitivity
            if a <= b && b <= c {
                prop_assert!(a <= c);
            }
            prop_assert_eq!(a.cmp(&a), Ordering::Equal);
            prop_assert!(a <= b || b <= a);
        }

        #[test]
        fn build_key_label_round_trips(k in arb_key()) {
            prop_assert_eq!(k.to_string().parse::<BuildKey>().unwrap(), k);
        }
    }
}
