#![allow(dead_code)]

use balancelab::model::{CombatLog, EraId, PlayerRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn eras() -> Vec<EraId> {
    vec![
        EraId::new("spring", 0, 1_000_000).unwrap(),
        EraId::new("summer", 1_000_000, 2_000_000).unwrap(),
    ]
}

pub fn player(profession: &str, dps: f64) -> PlayerRecord {
    PlayerRecord {
        account_hash: format!("acct-{profession}-{}", dps as u64),
        profession: profession.to_string(),
        specialization: None,
        dps,
        power_dps: dps,
        condition_dps: 0.0,
        healing_ps: 0.0,
        boon_ps: 0.0,
    }
}

pub fn log(id: &str, era: &str, encounter: &str, ts: i64, players: Vec<PlayerRecord>) -> CombatLog {
    CombatLog {
        log_id: id.to_string(),
        encounter_id: encounter.to_string(),
        patch_era: era.to_string(),
        timestamp_utc: ts,
        success: true,
        duration_s: 120.0,
        players,
    }
}

/// A valid single-player log in era `spring`.
pub fn simple(id: usize) -> CombatLog {
    log(&format!("log-{id}"), "spring", "vale", 1000 + id as i64, vec![player("ranger", 1000.0 + id as f64)])
}

/// Produces hostile variations of valid lines.
pub fn mutate(rng: &mut ChaCha8Rng, line: &str) -> Vec<u8> {
    let mut bytes = line.as_bytes().to_vec();
    match rng.random_range(0..8) {
        0 => bytes.truncate(rng.random_range(0..bytes.len())),
        1 => {
            for _ in 0..rng.random_range(1..6) {
                let i = rng.random_range(0..bytes.len());
                bytes[i] = rng.random();
            }
        }
        2 => {
            let i = rng.random_range(0..bytes.len());
            bytes.insert(i, rng.random_range(0..=255u8));
        }
        3 => {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            let keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
            v.as_object_mut().unwrap().remove(&keys[rng.random_range(0..keys.len())]);
            bytes = v.to_string().into_bytes();
        }
        4 => {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            let p = &mut v["players"][0];
            let field = ["dps", "power_dps", "condition_dps", "healing_ps", "profession"][rng.random_range(0..5)];
            p[field] = [serde_json::json!(-1.0), serde_json::json!("x"), serde_json::json!(null), serde_json::json!(1e308)]
                [rng.random_range(0..4)]
                .clone();
            bytes = v.to_string().into_bytes();
        }
        5 => {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            let players = v["players"].as_array().unwrap().clone();
            v["players"] = serde_json::Value::Array(players.iter().cycle().take(rng.random_range(0..25)).cloned().collect());
            v["patch_era"] = serde_json::json!(["../x", "spring", "", "a/b"][rng.random_range(0..4)]);
            bytes = v.to_string().into_bytes();
        }
        6 => bytes = (0..rng.random_range(0..200)).map(|_| rng.random()).collect(),
        _ => {
            let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
            v["surprise"] = serde_json::json!(1);
            bytes = v.to_string().into_bytes();
        }
    }
    bytes.retain(|&b| b != b'\n');
    bytes
}

use balancelab::ingest::{SyntheticBuild, SyntheticSpec};

pub fn synth_build(key: &str, location: f64, dispersion: f64, weight: f64) -> SyntheticBuild {
    SyntheticBuild {
        key: key.parse().unwrap(),
        location,
        dispersion,
        popularity_weight: weight,
        success_bonus: 0.0,
    }
}

/// Two eras, two encounters, five builds including one healer.
pub fn synth_spec(seed: u64, logs_per_era: usize) -> SyntheticSpec {
    SyntheticSpec {
        seed,
        eras: eras(),
        encounters: vec!["vale".into(), "gorse".into()],
        builds: vec![
            synth_build("ranger/soulbeast/dd", 30_000.0, 0.10, 3.0),
            synth_build("necromancer/reaper/dot", 27_000.0, 0.20, 2.0),
            synth_build("mesmer//dd", 24_000.0, 0.30, 2.0),
            synth_build("thief/daredevil/dd", 21_000.0, 0.15, 1.0),
            synth_build("guardian/firebrand/fs", 6_000.0, 0.25, 2.0),
        ],
        logs_per_era,
        players_per_log: 10,
    }
}

/// Every file under `root` with its bytes, sorted by path.
pub fn tree_bytes(root: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.display().to_string(), std::fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}
