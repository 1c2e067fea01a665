//! Per-(encounter, build) dps distributions and their order-statistic tools.
//!
//! The unit of analysis is one player slot in one attempt: a player who shows
//! up in five logs contributes five samples.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{BuildKey, CombatLog, EraId, PerformanceDistribution};
use crate::roles::{classify, RoleThresholds};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistError {
    #[error("distribution is empty")]
    EmptyDistribution,
    #[error("quantile {0} outside [0, 1]")]
    QOutOfRange(f64),
    #[error("bad quantile range [{0}, {1}]")]
    BadQuantileRange(f64, f64),
    #[error("log `{log_id}` belongs to era `{found}`, expected `{expected}`")]
    ForeignEra {
        log_id: String,
        found: String,
        expected: String,
    },
    #[error("profession missing in log `{0}`")]
    BadPlayer(String),
}

/// Floor for the role baseline when every slot in an encounter dealt no damage.
const MIN_BASELINE: f64 = 1e-9;

/// Median dps over all player slots, per encounter.
pub fn encounter_baselines<'a>(
    logs: impl IntoIterator<Item = &'a CombatLog>,
) -> BTreeMap<String, f64> {
    let mut by_encounter: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for log in logs {
        by_encounter
            .entry(&log.encounter_id)
            .or_default()
            .extend(log.players.iter().map(|p| p.dps));
    }
    by_encounter
        .into_iter()
        .map(|(enc, mut v)| {
            v.sort_by(f64::total_cmp);
            (enc.to_string(), stats::sorted_quantile(&v, 0.5).max(MIN_BASELINE))
        })
        .collect()
}

/// Build keys of every player in `log`, in player order.
pub fn classify_log(
    log: &CombatLog,
    baseline: f64,
    thresholds: &RoleThresholds,
) -> Result<Vec<BuildKey>, DistError> {
    log.players
        .iter()
        .map(|p| {
            let role = classify(p, baseline.max(MIN_BASELINE), thresholds)
                .expect("baseline is positive");
            BuildKey::new(&p.profession, p.specialization.as_deref(), role)
                .map_err(|_| DistError::BadPlayer(log.log_id.clone()))
        })
        .collect()
}

/// Groups every player slot of `logs` into its (encounter, build) distribution.
///
/// Two passes: encounter medians first, then classification against them.
pub fn build_distributions(
    logs: &[CombatLog],
    era: &EraId,
    thresholds: &RoleThresholds,
) -> Result<BTreeMap<(String, BuildKey), PerformanceDistribution>, DistError> {
    if let Some(log) = logs.iter().find(|l| l.patch_era != era.label) {
        return Err(DistError::ForeignEra {
            log_id: log.log_id.clone(),
            found: log.patch_era.clone(),
            expected: era.label.clone(),
        });
    }
    let baselines = encounter_baselines(logs);
    let mut samples: BTreeMap<(String, BuildKey), Vec<f64>> = BTreeMap::new();
    for log in logs {
        let keys = classify_log(log, baselines[&log.encounter_id], thresholds)?;
        for (key, player) in keys.into_iter().zip(&log.players) {
            samples
                .entry((log.encounter_id.clone(), key))
                .or_default()
                .push(player.dps);
        }
    }
    Ok(samples
        .into_iter()
        .map(|((enc, key), mut v)| {
            v.sort_by(f64::total_cmp);
            let dist = PerformanceDistribution::from_sorted(key.clone(), enc.clone(), era.clone(), v);
            ((enc, key), dist)
        })
        .collect())
}

/// Regroups a flat distribution map as encounter -> build -> distribution.
pub fn by_encounter(
    dists: BTreeMap<(String, BuildKey), PerformanceDistribution>,
) -> BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>> {
    let mut out: BTreeMap<String, BTreeMap<BuildKey, PerformanceDistribution>> = BTreeMap::new();
    for ((enc, key), d) in dists {
        out.entry(enc).or_default().insert(key, d);
    }
    out
}

/// Linear-interpolation quantile between closest ranks.
pub fn quantile(dist: &PerformanceDistribution, q: f64) -> Result<f64, DistError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DistError::QOutOfRange(q));
    }
    if dist.n() == 0 {
        return Err(DistError::EmptyDistribution);
    }
    Ok(stats::sorted_quantile(dist.samples(), q))
}

/// Keeps samples within `[quantile(lower_q), quantile(upper_q)]`. Never
/// returns an empty distribution: falls back to the median singleton.
pub fn trim(
    dist: &PerformanceDistribution,
    lower_q: f64,
    upper_q: f64,
) -> Result<PerformanceDistribution, DistError> {
    if !(0.0 <= lower_q && lower_q < upper_q && upper_q <= 1.0) {
        return Err(DistError::BadQuantileRange(lower_q, upper_q));
    }
    if lower_q == 0.0 && upper_q == 1.0 {
        return Ok(dist.clone());
    }
    let lo = quantile(dist, lower_q)?;
    let hi = quantile(dist, upper_q)?;
    let kept: Vec<f64> = dist
        .samples()
        .iter()
        .copied()
        .filter(|v| (lo..=hi).contains(v))
        .collect();
    if kept.is_empty() {
        return Ok(dist.with_sorted_samples(vec![dist.median()]));
    }
    Ok(dist.with_sorted_samples(kept))
}

/// `k` samples without replacement, deterministic per seed; identity when
/// `n <= k`.
pub fn subsample(dist: &PerformanceDistribution, k: usize, seed: u64) -> PerformanceDistribution {
    let k = k.max(1);
    if dist.n() <= k {
        return dist.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<f64> = rand::seq::index::sample(&mut rng, dist.n(), k)
        .into_iter()
        .map(|i| dist.samples()[i])
        .collect();
    picked.sort_by(f64::total_cmp);
    dist.with_sorted_samples(picked)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::model::{PlayerRecord, RoleBucket};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    pub(crate) fn dist(samples: &[f64]) -> PerformanceDistribution {
        PerformanceDistribution::new(
            BuildKey::new("x", None, RoleBucket::DirectDamage).unwrap(),
            "b",
            EraId::new("e", 0, 1).unwrap(),
            samples.to_vec(),
        )
        .unwrap()
    }

    fn player(prof: &str, dps: f64) -> PlayerRecord {
        PlayerRecord {
            account_hash: "acct".into(),
            profession: prof.into(),
            specialization: None,
            dps,
            power_dps: dps,
            condition_dps: 0.0,
            healing_ps: 0.0,
            boon_ps: 0.0,
        }
    }

    fn log(id: &str, enc: &str, players: Vec<PlayerRecord>) -> CombatLog {
        CombatLog {
            log_id: id.into(),
            encounter_id: enc.into(),
            patch_era: "e".into(),
            timestamp_utc: 0,
            success: true,
            duration_s: 1.0,
            players,
        }
    }

    /// Straight transcription of the interpolation rule on a sorted copy.
    fn oracle_quantile(xs: &[f64], q: f64) -> f64 {
        let mut s = xs.to_vec();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h = (s.len() - 1) as f64 * q;
        let f = h.floor();
        let i = f as usize;
        let upper = if i + 1 < s.len() { s[i + 1] } else { s[i] };
        s[i] + (h - f) * (upper - s[i])
    }

    #[test]
    fn one_log_two_players_same_build() {
        let era = EraId::new("e", 0, 1).unwrap();
        let logs = vec![log("1", "b", vec![player("thief", 10.0), player("thief", 12.0)])];
        let d = build_distributions(&logs, &era, &RoleThresholds::default()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.values().next().unwrap().n(), 2);
    }

    #[test]
    fn repeated_player_contributes_per_attempt() {
        let era = EraId::new("e", 0, 1).unwrap();
        let logs: Vec<CombatLog> = (0..5)
            .map(|i| log(&i.to_string(), "b", vec![player("thief", 10.0 + i as f64)]))
            .collect();
        let d = build_distributions(&logs, &era, &RoleThresholds::default()).unwrap();
        assert_eq!(d.values().next().unwrap().n(), 5);
    }

    #[test]
    fn foreign_era_rejected() {
        let era = EraId::new("other", 0, 1).unwrap();
        let logs = vec![log("1", "b", vec![player("thief", 10.0)])];
        assert!(matches!(
            build_distributions(&logs, &era, &RoleThresholds::default()),
            Err(DistError::ForeignEra { .. })
        ));
        assert!(build_distributions(&[], &era, &RoleThresholds::default()).unwrap().is_empty());
    }

    #[test]
    fn slot_counts_reconcile_per_encounter() {
        let era = EraId::new("e", 0, 1).unwrap();
        let logs = vec![
            log("1", "b", vec![player("thief", 10.0), player("warrior", 3.0)]),
            log("2", "b", vec![player("thief", 11.0)]),
            log("3", "c", vec![player("mesmer", 4.0), player("mesmer", 5.0), player("thief", 0.0)]),
        ];
        let d = build_distributions(&logs, &era, &RoleThresholds::default()).unwrap();
        let count = |enc: &str| d.iter().filter(|((e, _), _)| e == enc).map(|(_, d)| d.n()).sum::<usize>();
        assert_eq!(count("b"), 3);
        assert_eq!(count("c"), 3);
    }

    #[test]
    fn quantile_edges() {
        assert_eq!(quantile(&dist(&[10.0]), 0.37).unwrap(), 10.0);
        assert_eq!(quantile(&dist(&[0.0, 10.0]), 0.5).unwrap(), 5.0);
        assert!(matches!(quantile(&dist(&[1.0]), 1.5), Err(DistError::QOutOfRange(_))));
        assert!(matches!(quantile(&dist(&[1.0]), -0.1), Err(DistError::QOutOfRange(_))));
    }

    #[test]
    fn quantile_matches_oracle_on_random_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let xs: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1000.0)).collect();
            let d = dist(&xs);
            for q in [0.05, 0.25, 0.5, 0.75, 0.95] {
                assert_eq!(quantile(&d, q).unwrap(), oracle_quantile(&xs, q));
            }
        }
    }

    #[test]
    fn trim_cases() {
        let d = dist(&[1.0, 2.0, 3.0, 100.0]);
        assert_eq!(trim(&d, 0.0, 1.0).unwrap(), d);
        // q(0.75): h = 3 * 0.75 = 2.25 -> 3 + 0.25 * 97 = 27.25, so 100 goes
        assert_eq!(trim(&d, 0.0, 0.75).unwrap().samples(), &[1.0, 2.0, 3.0]);
        let single = dist(&[5.0]);
        assert_eq!(trim(&single, 0.2, 0.4).unwrap().samples(), &[5.0]);
        assert!(matches!(trim(&d, 0.5, 0.5), Err(DistError::BadQuantileRange(..))));
        assert!(matches!(trim(&d, 0.2, 1.1), Err(DistError::BadQuantileRange(..))));
    }

    #[test]
    fn trim_falls_back_to_median() {
        // q(0.4) = 1.2 and q(0.45) = 1.35 bracket no sample
        let d = dist(&[0.0, 1.0, 2.0, 3.0]);
        let t = trim(&d, 0.4, 0.45).unwrap();
        assert_eq!(t.samples(), &[1.5]);
    }

    #[test]
    fn subsample_rules() {
        let d = dist(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(subsample(&d, 10, 1), d);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..10_000)
            .map(|_| 1000.0 * (0.4 * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let full = dist(&xs);
        let a = subsample(&full, 1000, 42);
        assert_eq!(a, subsample(&full, 1000, 42));
        assert_eq!(a.n(), 1000);
        assert!(a.samples().windows(2).all(|w| w[0] <= w[1]));
        assert!((a.median() / full.median() - 1.0).abs() < 0.05);
    }

    fn arb_samples() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1e5, 1..60)
    }

    proptest! {
        #[test]
        fn quantile_monotone(xs in arb_samples(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let d = dist(&xs);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantile(&d, lo).unwrap() <= quantile(&d, hi).unwrap());
        }

        #[test]
        fn cached_stats_match_recomputation(xs in arb_samples()) {
            let d = dist(&xs);
            prop_assert_eq!(d.median(), oracle_quantile(&xs, 0.5));
            prop_assert_eq!(d.lower_quartile(), oracle_quantile(&xs, 0.25));
            prop_assert_eq!(d.upper_quartile(), oracle_quantile(&xs, 0.75));
        }

        #[test]
        fn trim_nested_with_full_range(xs in arb_samples(), lo in 0.0f64..0.49, hi in 0.51f64..=1.0) {
            let d = dist(&xs);
            let once = trim(&d, lo, hi).unwrap();
            prop_assert_eq!(&trim(&trim(&d, 0.0, 1.0).unwrap(), lo, hi).unwrap(), &once);
            prop_assert_eq!(&trim(&once, 0.0, 1.0).unwrap(), &once);
            prop_assert!(once.n() >= 1);
        }

        #[test]
        fn trim_keeps_only_inner_band(xs in arb_samples(), lo in 0.0f64..0.49, hi in 0.51f64..=1.0) {
            let d = dist(&xs);
            let t = trim(&d, lo, hi).unwrap();
            let (ql, qh) = (quantile(&d, lo).unwrap(), quantile(&d, hi).unwrap());
            let expected: Vec<f64> = d.samples().iter().copied().filter(|v| *v >= ql && *v <= qh).collect();
            if expected.is_empty() {
                prop_assert_eq!(t.samples(), &[d.median()][..]);
            } else {
                prop_assert_eq!(t.samples(), &expected[..]);
            }
        }
    }
}
