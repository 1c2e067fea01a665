//! Role bucketing of player records.
//!
//! Support signals are compared against the encounter's median dps so that one
//! threshold set works across encounters with very different damage scales.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PlayerRecord, RoleBucket};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RoleError {
    #[error("encounter median dps must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("threshold `{name}` out of range: {value}")]
    BadThreshold { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoleThresholds {
    /// healing_ps / encounter median dps at or above which a player is FullSupport.
    pub heal_ratio_min: f64,
    /// boon_ps / encounter median dps at or above which a player is OffensiveSupport.
    pub boon_ratio_min: f64,
    /// condition share of own dps at or above which a player is DamageOverTime.
    pub condition_share_min: f64,
}

impl Default for RoleThresholds {
    fn default() -> Self {
        RoleThresholds {
            heal_ratio_min: 0.5,
            boon_ratio_min: 0.15,
            condition_share_min: 0.5,
        }
    }
}

impl RoleThresholds {
    pub fn validate(&self) -> Result<(), RoleError> {
        let bad = |name, value: f64| RoleError::BadThreshold { name, value };
        if !(self.heal_ratio_min >= 0.0 && self.heal_ratio_min.is_finite()) {
            return Err(bad("heal_ratio_min", self.heal_ratio_min));
        }
        if !(0.0..=1.0).contains(&self.boon_ratio_min) {
            return Err(bad("boon_ratio_min", self.boon_ratio_min));
        }
        if !(0.0..=1.0).contains(&self.condition_share_min) {
            return Err(bad("condition_share_min", self.condition_share_min));
        }
        Ok(())
    }
}

const DPS_EPSILON: f64 = 1e-9;

pub fn classify(
    record: &PlayerRecord,
    encounter_median_dps: f64,
    thresholds: &RoleThresholds,
) -> Result<RoleBucket, RoleError> {
    if encounter_median_dps.is_nan() || encounter_median_dps <= 0.0 {
        return Err(RoleError::NonPositiveBaseline(encounter_median_dps));
    }
    let bucket = if record.healing_ps >= thresholds.heal_ratio_min * encounter_median_dps {
        RoleBucket::FullSupport
    } else if record.boon_ps >= thresholds.boon_ratio_min * encounter_median_dps {
        RoleBucket::OffensiveSupport
    } else if record.condition_dps / record.dps.max(DPS_EPSILON) >= thresholds.condition_share_min
    {
        RoleBucket::DamageOverTime
    } else {
        RoleBucket::DirectDamage
    };
    Ok(bucket)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn record(dps: f64, cond: f64, heal: f64, boon: f64) -> PlayerRecord {
        PlayerRecord {
            account_hash: "acc".into(),
            profession: "necromancer".into(),
            specialization: None,
            dps,
            power_dps: dps - cond,
            condition_dps: cond,
            healing_ps: heal,
            boon_ps: boon,
        }
    }

    /// Independent restatement of the ladder as a table of guarded outcomes.
    fn oracle(r: &PlayerRecord, median: f64, t: &RoleThresholds) -> RoleBucket {
        let share = if r.dps > 1e-9 { r.condition_dps / r.dps } else { r.condition_dps / 1e-9 };
        let rules: [(bool, RoleBucket); 4] = [
            (r.healing_ps / median >= t.heal_ratio_min, RoleBucket::FullSupport),
            (r.boon_ps / median >= t.boon_ratio_min, RoleBucket::OffensiveSupport),
            (share >= t.condition_share_min, RoleBucket::DamageOverTime),
            (true, RoleBucket::DirectDamage),
        ];
        rules.iter().find(|(hit, _)| *hit).unwrap().1
    }

    #[test]
    fn pure_power_is_direct_damage() {
        let r = record(20_000.0, 0.0, 0.0, 0.0);
        assert_eq!(
            classify(&r, 15_000.0, &RoleThresholds::default()).unwrap(),
            RoleBucket::DirectDamage
        );
    }

    #[test]
    fn pure_condition_is_damage_over_time() {
        let r = record(20_000.0, 20_000.0, 0.0, 0.0);
        assert_eq!(
            classify(&r, 15_000.0, &RoleThresholds::default()).unwrap(),
            RoleBucket::DamageOverTime
        );
    }

    #[test]
    fn support_precedes_damage_type() {
        let t = RoleThresholds::default();
        assert_eq!(
            classify(&record(5_000.0, 5_000.0, 8_000.0, 0.0), 10_000.0, &t).unwrap(),
            RoleBucket::FullSupport
        );
        assert_eq!(
            classify(&record(5_000.0, 5_000.0, 0.0, 1_500.0), 10_000.0, &t).unwrap(),
            RoleBucket::OffensiveSupport
        );
    }

    #[test]
    fn zero_dps_record_classifies() {
        let r = record(0.0, 0.0, 0.0, 0.0);
        assert_eq!(
            classify(&r, 1.0, &RoleThresholds::default()).unwrap(),
            RoleBucket::DirectDamage
        );
    }

    #[test]
    fn non_positive_baseline_rejected() {
        let r = record(1.0, 0.0, 0.0, 0.0);
        assert!(matches!(
            classify(&r, 0.0, &RoleThresholds::default()),
            Err(RoleError::NonPositiveBaseline(_))
        ));
        assert!(classify(&r, f64::NAN, &RoleThresholds::default()).is_err());
    }

    #[test]
    fn threshold_validation() {
        assert!(RoleThresholds::default().validate().is_ok());
        let t = RoleThresholds { heal_ratio_min: 3.0, ..Default::default() };
        assert!(t.validate().is_ok());
        let t = RoleThresholds { boon_ratio_min: 1.5, ..Default::default() };
        assert!(t.validate().is_err());
    }

    #[test]
    fn random_sweep_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let t = RoleThresholds::default();
        let mut ours = [0usize; 4];
        let mut theirs = [0usize; 4];
        for _ in 0..1000 {
            let dps = rng.random_range(0.0..40_000.0);
            let cond = dps * rng.random_range(0.0..1.0);
            let heal = rng.random_range(0.0..12_000.0);
            let boon = rng.random_range(0.0..4_000.0);
            let median = rng.random_range(5_000.0..25_000.0);
            let r = record(dps, cond, heal, boon);
            let a = classify(&r, median, &t).unwrap();
            let b = oracle(&r, median, &t);
            assert_eq!(a, b);
            ours[a as usize] += 1;
            theirs[b as usize] += 1;
        }
        assert_eq!(ours, theirs);
        assert!(ours.iter().all(|&c| c > 0), "sweep should hit every bucket: {ours:?}");
    }

    proptest! {
        #[test]
        fn healing_is_monotone(
            dps in 0.0f64..50_000.0, cond_frac in 0.0f64..1.0,
            heal in 0.0f64..20_000.0, extra in 0.0f64..20_000.0,
            boon in 0.0f64..5_000.0, median in 1.0f64..30_000.0,
        ) {
            let t = RoleThresholds::default();
            let r = record(dps, dps * cond_frac, heal, boon);
            if classify(&r, median, &t).unwrap() == RoleBucket::FullSupport {
                let more = record(dps, dps * cond_frac, heal + extra, boon);
                prop_assert_eq!(classify(&more, median, &t).unwrap(), RoleBucket::FullSupport);
            }
        }

        #[test]
        fn scale_covariant(
            dps in 0.0f64..50_000.0, cond_frac in 0.0f64..1.0,
            heal in 0.0f64..20_000.0, boon in 0.0f64..5_000.0,
            median in 1.0f64..30_000.0, c in prop::sample::select(vec![0.5, 2.0, 4.0, 0.25]),
        ) {
            // power-of-two factors keep the scaled comparisons exact
            let t = RoleThresholds::default();
            let r = record(dps, dps * cond_frac, heal, boon);
            let s = record(dps * c, dps * cond_frac * c, heal * c, boon * c);
            prop_assert_eq!(classify(&r, median, &t).unwrap(), classify(&s, median * c, &t).unwrap());
        }
    }
}
