//! Append-only log store partitioned by (patch era, encounter).
//!
//! Layout under the root directory:
//!
//! ```text
//! eras                      label,start_utc,end_utc per line
//! index                     era<TAB>encounter<TAB>count per line (regenerable)
//! {era_label}/{encounter}.log
//! ```
//!
//! Partition files use the canonical ingest line format. Each append writes
//! one complete line and syncs it; readers ignore a trailing line that has no
//! terminating newline, so they never observe a torn record. Opening a store
//! rebuilds the index from the partition files.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ingest::{is_safe_name, parse_log_line, serialize_log, ParseError};
use crate::model::{CombatLog, EraId};

const ERAS_FILE: &str = "eras";
const INDEX_FILE: &str = "index";
const PARTITION_EXT: &str = "log";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("era `{0}` is not registered in this store")]
    EraUnknown(String),
    #[error("era `{0}` overlaps a registered era or conflicts with its label")]
    EraConflict(String),
    #[error("invalid era label `{0}`")]
    BadEraLabel(String),
    #[error("malformed era registry line {line}: {detail}")]
    BadRegistry { line: usize, detail: String },
    #[error("corrupt record in {path} line {line}: {source}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        #[source]
        source: ParseError,
    },
    #[error("no store at {0} (missing era registry)")]
    Missing(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

type PartitionId = (String, String);

/// Whether each append is synced to disk before it returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    #[default]
    SyncEachAppend,
    /// Sync on [`LogStore::flush_index`] only. For bulk loads that can be re-run.
    SyncOnFlush,
}

#[derive(Debug)]
pub struct LogStore {
    root: PathBuf,
    eras: Vec<EraId>,
    index: BTreeMap<PartitionId, usize>,
    known_ids: HashSet<String>,
    writers: HashMap<PartitionId, File>,
    durability: Durability,
}

impl LogStore {
    /// Opens the store at `root`, creating it if needed and registering any
    /// eras not yet known.
    pub fn open_or_create(root: impl AsRef<Path>, eras: &[EraId]) -> Result<Self, StoreError> {
        let root = root.as_ref();
        fs::create_dir_all(root).map_err(io_err(root))?;
        let registry = root.join(ERAS_FILE);
        if !registry.exists() {
            File::create(&registry).map_err(io_err(&registry))?;
        }
        let mut store = Self::open(root)?;
        for era in eras {
            store.register_era(era.clone())?;
        }
        Ok(store)
    }

    /// Opens an existing store and rebuilds its index from the partitions.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let registry = root.join(ERAS_FILE);
        if !registry.is_file() {
            return Err(StoreError::Missing(root));
        }
        let eras = read_registry(&registry)?;
        let mut store = LogStore {
            root,
            eras,
            index: BTreeMap::new(),
            known_ids: HashSet::new(),
            writers: HashMap::new(),
            durability: Durability::default(),
        };
        store.rebuild()?;
        Ok(store)
    }

    pub fn set_durability(&mut self, durability: Durability) {
        self.durability = durability;
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registered eras ordered by start time.
    pub fn eras(&self) -> &[EraId] {
        &self.eras
    }

    pub fn era(&self, label: &str) -> Option<&EraId> {
        self.eras.iter().find(|e| e.label == label)
    }

    /// Adds an era. Re-registering an identical era is a no-op.
    pub fn register_era(&mut self, era: EraId) -> Result<(), StoreError> {
        if !is_safe_name(&era.label) || era.label == ERAS_FILE || era.label == INDEX_FILE {
            return Err(StoreError::BadEraLabel(era.label));
        }
        if self.eras.contains(&era) {
            return Ok(());
        }
        if self
            .eras
            .iter()
            .any(|e| e.label == era.label || e.overlaps(&era))
        {
            return Err(StoreError::EraConflict(era.label));
        }
        self.eras.push(era);
        self.eras.sort_by(|a, b| (a.start_utc, &a.label).cmp(&(b.start_utc, &b.label)));
        let path = self.root.join(ERAS_FILE);
        write_atomically(&path, self.registry_text().as_bytes())
    }

    fn registry_text(&self) -> String {
        self.eras
            .iter()
            .map(|e| format!("{},{},{}\n", e.label, e.start_utc, e.end_utc))
            .collect()
    }

    /// SHA-256 over the canonical era registry, hex encoded.
    pub fn era_registry_hash(&self) -> String {
        hex::encode(Sha256::digest(self.registry_text().as_bytes()))
    }

    pub fn len(&self) -> usize {
        self.known_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known_ids.is_empty()
    }

    pub fn contains(&self, log_id: &str) -> bool {
        self.known_ids.contains(log_id)
    }

    /// Record counts per (era label, encounter id).
    pub fn partition_counts(&self) -> &BTreeMap<(String, String), usize> {
        &self.index
    }

    /// Stores `log` unless its id is already known. Returns whether it was new.
    pub fn append(&mut self, log: &CombatLog) -> Result<bool, StoreError> {
        if self.era(&log.patch_era).is_none() {
            return Err(StoreError::EraUnknown(log.patch_era.clone()));
        }
        if self.known_ids.contains(&log.log_id) {
            return Ok(false);
        }
        let mut line = serialize_log(log);
        line.push('\n');
        let pid = (log.patch_era.clone(), log.encounter_id.clone());
        let path = self.partition_path(&pid.0, &pid.1);
        if !self.writers.contains_key(&pid) {
            let dir = self.root.join(&pid.0);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let file = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io_err(&path))?;
            self.writers.insert(pid.clone(), file);
        }
        let file = self.writers.get_mut(&pid).expect("writer inserted above");
        file.write_all(line.as_bytes()).map_err(io_err(&path))?;
        if self.durability == Durability::SyncEachAppend {
            file.sync_data().map_err(io_err(&path))?;
        }
        *self.index.entry(pid).or_default() += 1;
        self.known_ids.insert(log.log_id.clone());
        Ok(true)
    }

    /// Syncs open partitions and rewrites the index file.
    pub fn flush_index(&mut self) -> Result<(), StoreError> {
        for ((era, enc), file) in &self.writers {
            file.sync_data()
                .map_err(io_err(&self.partition_path(era, enc)))?;
        }
        let text: String = self
            .index
            .iter()
            .map(|((era, enc), n)| format!("{era}\t{enc}\t{n}\n"))
            .collect();
        write_atomically(&self.root.join(INDEX_FILE), text.as_bytes())
    }

    /// Every matching log, ordered by `(timestamp_utc, log_id)`.
    pub fn scan(
        &self,
        era: Option<&str>,
        encounter: Option<&str>,
    ) -> Result<Vec<CombatLog>, StoreError> {
        let mut out = Vec::new();
        for era_id in self.eras.iter().filter(|e| era.is_none_or(|l| l == e.label)) {
            for (enc, path) in self.partitions_of(&era_id.label)? {
                if encounter.is_some_and(|want| want != enc) {
                    continue;
                }
                read_partition(&path, |log| out.push(log))?;
            }
        }
        out.sort_by(|a, b| (a.timestamp_utc, &a.log_id).cmp(&(b.timestamp_utc, &b.log_id)));
        Ok(out)
    }

    fn partition_path(&self, era: &str, encounter: &str) -> PathBuf {
        self.root
            .join(era)
            .join(format!("{encounter}.{PARTITION_EXT}"))
    }

    /// Partition files of one era, sorted by encounter id.
    fn partitions_of(&self, era: &str) -> Result<Vec<(String, PathBuf)>, StoreError> {
        let dir = self.root.join(era);
        let entries = match fs::read_dir(&dir) {
            Ok(entries) => entries,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut parts = Vec::new();
        for entry in entries {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some(PARTITION_EXT) {
                continue;
            }
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                parts.push((stem.to_string(), path.clone()));
            }
        }
        parts.sort();
        Ok(parts)
    }

    fn rebuild(&mut self) -> Result<(), StoreError> {
        self.index.clear();
        self.known_ids.clear();
        let labels: Vec<String> = self.eras.iter().map(|e| e.label.clone()).collect();
        for era in labels {
            for (enc, path) in self.partitions_of(&era)? {
                truncate_torn_tail(&path)?;
                let mut count = 0;
                let known = &mut self.known_ids;
                read_partition(&path, |log| {
                    known.insert(log.log_id);
                    count += 1;
                })?;
                if count > 0 {
                    self.index.insert((era.clone(), enc), count);
                }
            }
        }
        Ok(())
    }
}

impl Drop for LogStore {
    fn drop(&mut self) {
        if !self.writers.is_empty() {
            if let Err(e) = self.flush_index() {
                log::warn!("failed to flush store index: {e}");
            }
        }
    }
}

fn read_registry(path: &Path) -> Result<Vec<EraId>, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut eras: Vec<EraId> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |detail: &str| StoreError::BadRegistry {
            line: i + 1,
            detail: detail.to_string(),
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let [label, start, end] = fields[..] else {
            return Err(bad("expected label,start_utc,end_utc"));
        };
        let start: i64 = start.parse().map_err(|_| bad("start_utc is not an integer"))?;
        let end: i64 = end.parse().map_err(|_| bad("end_utc is not an integer"))?;
        let era = EraId::new(label, start, end).map_err(|e| bad(&e.to_string()))?;
        if !is_safe_name(label) {
            return Err(bad("unsafe era label"));
        }
        if eras.iter().any(|e| e.label == era.label || e.overlaps(&era)) {
            return Err(bad("era overlaps or repeats another era"));
        }
        eras.push(era);
    }
    eras.sort_by(|a, b| (a.start_utc, &a.label).cmp(&(b.start_utc, &b.label)));
    Ok(eras)
}

/// Parses an era registry file (same format as the store's `eras` file).
pub fn load_era_registry(path: impl AsRef<Path>) -> Result<Vec<EraId>, StoreError> {
    read_registry(path.as_ref())
}

fn read_partition(path: &Path, mut f: impl FnMut(CombatLog)) -> Result<(), StoreError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(io_err(path))?;
        if n == 0 || buf.last() != Some(&b'\n') {
            // EOF, or a line still being written
            break;
        }
        line_no += 1;
        if buf.iter().all(u8::is_ascii_whitespace) {
            continue;
        }
        let log = parse_log_line(&buf).map_err(|source| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: line_no,
            source,
        })?;
        f(log);
    }
    Ok(())
}

fn truncate_torn_tail(path: &Path) -> Result<(), StoreError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.is_empty() || bytes.last() == Some(&b'\n') {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    log::warn!("truncating torn record at end of {}", path.display());
    let file = OpenOptions::new().write(true).open(path).map_err(io_err(path))?;
    file.set_len(keep as u64).map_err(io_err(path))?;
    file.sync_all().map_err(io_err(path))
}

fn write_atomically(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}
