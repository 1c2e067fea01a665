//! Combat-log ingestion: the canonical line codec, file ingestion with
//! de-duplication, the paginated fetch client and the synthetic generator.

mod fetch;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::model::{CombatLog, MAX_PLAYERS_PER_LOG};
use crate::store::{LogStore, StoreError};

pub use fetch::{fetch_paginated, FetchConfig, FetchError, PageStream};
pub use synth::{generate_synthetic, GroundTruthManifest, SynthError, SyntheticBuild, SyntheticSpec};

/// Why a line was refused. Every error carries the offending field path.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed record at `{path}`: {detail}")]
    MalformedRecord { path: String, detail: String },
    #[error("schema violation at `{path}`: {detail}")]
    SchemaViolation { path: String, detail: String },
    #[error("invariant violation at `{0}`")]
    InvariantViolation(String),
}

impl ParseError {
    pub fn reason(&self) -> RejectReason {
        match self {
            ParseError::MalformedRecord { .. } => RejectReason::MalformedRecord,
            ParseError::SchemaViolation { .. } => RejectReason::SchemaViolation,
            ParseError::InvariantViolation(_) => RejectReason::InvariantViolation,
        }
    }

    pub fn path(&self) -> &str {
        match self {
            ParseError::MalformedRecord { path, .. } | ParseError::SchemaViolation { path, .. } => {
                path
            }
            ParseError::InvariantViolation(path) => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RejectReason {
    MalformedRecord,
    SchemaViolation,
    InvariantViolation,
    EraUnknown,
    IoError,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Parses and validates one canonical record.
pub fn parse_log_line(line: &[u8]) -> Result<CombatLog, ParseError> {
    let text = std::str::from_utf8(line).map_err(|e| ParseError::MalformedRecord {
        path: ".".into(),
        detail: format!("invalid UTF-8: {e}"),
    })?;
    let mut de = serde_json::Deserializer::from_str(text.trim_end_matches(['\r', '\n']));
    let log: CombatLog = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        classify_json_error(path, &inner)
    })?;
    de.end()
        .map_err(|e| classify_json_error(".".to_string(), &e))?;
    validate(&log)?;
    Ok(log)
}

fn classify_json_error(path: String, e: &serde_json::Error) -> ParseError {
    use serde_json::error::Category;
    let detail = e.to_string();
    match e.classify() {
        Category::Data => ParseError::SchemaViolation { path, detail },
        Category::Syntax | Category::Eof | Category::Io => {
            ParseError::MalformedRecord { path, detail }
        }
    }
}

/// Checks every record invariant that serde cannot express.
pub fn validate(log: &CombatLog) -> Result<(), ParseError> {
    let invariant = |p: &str| Err(ParseError::InvariantViolation(p.to_string()));
    if log.log_id.is_empty() {
        return invariant("log_id");
    }
    if !is_safe_name(&log.encounter_id) {
        return invariant("encounter_id");
    }
    if !is_safe_name(&log.patch_era) {
        return invariant("patch_era");
    }
    if !(log.duration_s > 0.0 && log.duration_s.is_finite()) {
        return invariant("duration_s");
    }
    if log.players.is_empty() || log.players.len() > MAX_PLAYERS_PER_LOG {
        return invariant("players");
    }
    for (i, p) in log.players.iter().enumerate() {
        if let Err(field) = p.check() {
            return invariant(&format!("players[{i}].{field}"));
        }
    }
    Ok(())
}

/// Era labels and encounter ids become directory and file names in the store.
pub fn is_safe_name(s: &str) -> bool {
    !s.is_empty()
        && s.len() <= 128
        && !s.starts_with('.')
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

/// Canonical single-line form (struct field order, shortest round-trip floats).
pub fn serialize_log(log: &CombatLog) -> String {
    serde_json::to_string(log).expect("combat logs always serialize")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Rejection {
    pub source: String,
    pub line: usize,
    pub reason: RejectReason,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub accepted: usize,
    pub rejected: usize,
    pub duplicate: usize,
    pub rejection_reasons: BTreeMap<RejectReason, usize>,
    pub rejections: Vec<Rejection>,
    /// Paths that could not be read at all.
    pub io_errors: Vec<String>,
}

impl IngestReport {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected + self.duplicate
    }

    fn reject(&mut self, source: &str, line: usize, reason: RejectReason, detail: String) {
        self.rejected += 1;
        *self.rejection_reasons.entry(reason).or_default() += 1;
        self.rejections.push(Rejection {
            source: source.to_string(),
            line,
            reason,
            detail,
        });
    }

    /// Routes one parsed (or failed) record into the store and the tallies.
    pub fn record(
        &mut self,
        store: &mut LogStore,
        source: &str,
        line: usize,
        parsed: Result<CombatLog, ParseError>,
    ) {
        match parsed {
            Err(e) => self.reject(source, line, e.reason(), e.to_string()),
            Ok(log) => match store.append(&log) {
                Ok(true) => self.accepted += 1,
                Ok(false) => self.duplicate += 1,
                Err(e @ StoreError::EraUnknown(_)) => {
                    self.reject(source, line, RejectReason::EraUnknown, e.to_string())
                }
                Err(e) => self.reject(source, line, RejectReason::IoError, e.to_string()),
            },
        }
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accepted\t{}", self.accepted)?;
        writeln!(f, "rejected\t{}", self.rejected)?;
        writeln!(f, "duplicate\t{}", self.duplicate)?;
        for (reason, count) in &self.rejection_reasons {
            writeln!(f, "reason\t{reason}\t{count}")?;
        }
        for path in &self.io_errors {
            writeln!(f, "io_error\t{path}")?;
        }
        Ok(())
    }
}

/// Ingests every line of every file. Unreadable paths are recorded and
/// skipped; the first occurrence of a `log_id` wins.
pub fn ingest_files<P: AsRef<Path>>(paths: &[P], store: &mut LogStore) -> IngestReport {
    let mut report = IngestReport::default();
    for path in paths {
        let path = path.as_ref();
        let source = path.display().to_string();
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) => {
                report.io_errors.push(format!("{source}: {e}"));
                continue;
            }
        };
        let mut reader = BufReader::new(file);
        let mut buf = Vec::new();
        let mut line_no = 0;
        loop {
            buf.clear();
            match reader.read_until(b'\n', &mut buf) {
                Ok(0) => break,
                Ok(_) => {}
                Err(e) => {
                    report.io_errors.push(format!("{source}:{}: {e}", line_no + 1));
                    break;
                }
            }
            line_no += 1;
            if buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            report.record(store, &source, line_no, parse_log_line(&buf));
        }
    }
    if let Err(e) = store.flush_index() {
        report.io_errors.push(format!("index: {e}"));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const GOOD: &str = r#"{"log_id":"l1","encounter_id":"vale_guardian","patch_era":"e1","timestamp_utc":100,"success":true,"duration_s":312.5,"players":[{"account_hash":"a","profession":"Engineer","specialization":"Mechanist","dps":30000.0,"power_dps":30000.0,"condition_dps":0.0,"healing_ps":0.0,"boon_ps":0.0},{"account_hash":"b","profession":"guardian","specialization":null,"dps":12000.0,"power_dps":2000.0,"condition_dps":10000.0,"healing_ps":4000.0,"boon_ps":300.0}]}"#;

    #[test]
    fn parses_canonical_record() {
        let log = parse_log_line(GOOD.as_bytes()).unwrap();
        assert_eq!(log.players.len(), 2);
        assert!(log.success);
        assert_eq!(log.players[1].specialization, None);
        assert_eq!(serialize_log(&log), GOOD);
    }

    #[test]
    fn field_order_is_irrelevant() {
        let shuffled = r#"{"players":[{"boon_ps":0,"healing_ps":0,"condition_dps":0,"power_dps":5,"dps":5,"specialization":null,"profession":"thief","account_hash":"x"}],"success":false,"duration_s":10,"timestamp_utc":7,"patch_era":"e1","encounter_id":"b","log_id":"z"}"#;
        let log = parse_log_line(shuffled.as_bytes()).unwrap();
        assert_eq!(log.log_id, "z");
        let canonical = serialize_log(&log);
        assert!(canonical.starts_with(r#"{"log_id":"z","encounter_id":"b""#));
        assert_eq!(parse_log_line(canonical.as_bytes()).unwrap(), log);
    }

    #[test]
    fn zero_duration_is_invariant_violation() {
        let line = GOOD.replace("312.5", "0");
        assert_eq!(
            parse_log_line(line.as_bytes()),
            Err(ParseError::InvariantViolation("duration_s".into()))
        );
    }

    #[test]
    fn dps_decomposition_off_by_ten_percent() {
        // 30000 vs 27000: deviation 3000 > max(1e-6, 1e-3 * 30000) = 30
        let line = GOOD.replace(r#""power_dps":30000.0"#, r#""power_dps":27000.0"#);
        assert_eq!(
            parse_log_line(line.as_bytes()),
            Err(ParseError::InvariantViolation("players[0].dps".into()))
        );
        // within 1e-3 relative tolerance: 29980 deviates by 20 <= 30
        let line = GOOD.replace(r#""power_dps":30000.0"#, r#""power_dps":29980.0"#);
        assert!(parse_log_line(line.as_bytes()).is_ok());
    }

    #[test]
    fn syntax_errors_are_malformed() {
        let err = parse_log_line(b"{\"log_id\": ").unwrap_err();
        assert_eq!(err.reason(), RejectReason::MalformedRecord);
        let err = parse_log_line(format!("{GOOD} trailing").as_bytes()).unwrap_err();
        assert_eq!(err.reason(), RejectReason::MalformedRecord);
        let err = parse_log_line(&[0xff, 0xfe]).unwrap_err();
        assert_eq!(err.reason(), RejectReason::MalformedRecord);
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let line = GOOD.replace(r#""success":true"#, r#""success":"yes""#);
        let err = parse_log_line(line.as_bytes()).unwrap_err();
        assert_eq!(err.reason(), RejectReason::SchemaViolation);
        assert_eq!(err.path(), "success");

        let line = GOOD.replace(r#""healing_ps":4000.0"#, r#""healing_ps":"4000""#);
        let err = parse_log_line(line.as_bytes()).unwrap_err();
        assert_eq!(err.path(), "players[1].healing_ps");

        let line = GOOD.replace(r#""log_id":"l1","#, "");
        assert_eq!(parse_log_line(line.as_bytes()).unwrap_err().reason(), RejectReason::SchemaViolation);
    }

    #[test]
    fn unknown_fields_rejected() {
        let line = GOOD.replace(r#""success":true"#, r#""success":true,"extra":1"#);
        assert_eq!(parse_log_line(line.as_bytes()).unwrap_err().reason(), RejectReason::SchemaViolation);
    }

    #[test]
    fn structural_invariants() {
        let line = GOOD.replace(r#""encounter_id":"vale_guardian""#, r#""encounter_id":"../etc""#);
        assert_eq!(
            parse_log_line(line.as_bytes()),
            Err(ParseError::InvariantViolation("encounter_id".into()))
        );
        let empty_players = r#"{"log_id":"z","encounter_id":"b","patch_era":"e1","timestamp_utc":7,"success":false,"duration_s":10,"players":[]}"#;
        assert_eq!(
            parse_log_line(empty_players.as_bytes()),
            Err(ParseError::InvariantViolation("players".into()))
        );
        let line = GOOD.replace(r#""boon_ps":300.0"#, r#""boon_ps":-1"#);
        assert_eq!(
            parse_log_line(line.as_bytes()),
            Err(ParseError::InvariantViolation("players[1].boon_ps".into()))
        );
    }
}
