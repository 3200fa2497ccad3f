//! Append-only run store backing byte-exact replay.
//!
//! Every cacheable interaction (search call, page fetch, LLM completion,
//! derived answer) is persisted as one JSON line in a per-kind file under the
//! store directory. Records are immutable: a second `put` with an existing
//! key returns the stored record untouched. Payload integrity is guarded by
//! a sha256 checksum over the canonical (sorted-key) JSON encoding.

use std::collections::HashMap;
use std::fmt;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Record category; each kind lives in its own JSON-lines file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Serp,
    Page,
    Completion,
    Answer,
}

impl RunKind {
    pub fn file_name(&self) -> &'static str {
        match self {
            RunKind::Serp => "serp.jsonl",
            RunKind::Page => "page.jsonl",
            RunKind::Completion => "completion.jsonl",
            RunKind::Answer => "answer.jsonl",
        }
    }

    pub const ALL: [RunKind; 4] = [
        RunKind::Serp,
        RunKind::Page,
        RunKind::Completion,
        RunKind::Answer,
    ];
}

impl fmt::Display for RunKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RunKind::Serp => "serp",
            RunKind::Page => "page",
            RunKind::Completion => "completion",
            RunKind::Answer => "answer",
        };
        write!(f, "{name}")
    }
}

/// One immutable cache-keyed interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub kind: RunKind,
    pub key_hash: String,
    pub payload: serde_json::Value,
    pub created_at: DateTime<Utc>,
    pub checksum: String,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store corrupt: {0}")]
    StoreCorrupt(String),
    #[error("store io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("store serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Counters for one process run: all provider-adapter invocations plus
/// store-level cache traffic.
#[derive(Debug, Default)]
pub struct RunStats {
    provider_calls: AtomicU64,
    store_hits: AtomicU64,
    store_writes: AtomicU64,
}

impl RunStats {
    pub fn record_provider_call(&self) {
        self.provider_calls.fetch_add(1, Ordering::SeqCst);
    }

    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::SeqCst)
    }

    pub fn store_hits(&self) -> u64 {
        self.store_hits.load(Ordering::SeqCst)
    }

    pub fn store_writes(&self) -> u64 {
        self.store_writes.load(Ordering::SeqCst)
    }

    /// One-line machine-greppable summary, printed by the CLI after each run.
    pub fn summary_line(&self) -> String {
        format!(
            "provider_calls={} store_hits={} store_writes={}",
            self.provider_calls(),
            self.store_hits(),
            self.store_writes()
        )
    }
}

/// Canonical JSON bytes of a value: object keys sorted recursively, no
/// insignificant whitespace. Checksums and cache keys hash this encoding so
/// they are independent of field insertion order.
pub fn canonical_json_bytes(value: &serde_json::Value) -> Vec<u8> {
    fn sort(value: &serde_json::Value) -> serde_json::Value {
        match value {
            serde_json::Value::Object(map) => {
                let mut entries: Vec<_> = map.iter().collect();
                entries.sort_by(|a, b| a.0.cmp(b.0));
                let mut sorted = serde_json::Map::new();
                for (k, v) in entries {
                    sorted.insert(k.clone(), sort(v));
                }
                serde_json::Value::Object(sorted)
            }
            serde_json::Value::Array(items) => {
                serde_json::Value::Array(items.iter().map(sort).collect())
            }
            other => other.clone(),
        }
    }
    serde_json::to_vec(&sort(value)).expect("canonical JSON serialization cannot fail")
}

/// Hex sha256 of the canonical encoding of `value`.
pub fn payload_checksum(value: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(canonical_json_bytes(value)))
}

/// Hex sha256 over `parts` joined with an unprintable separator, used for
/// every cache key in the store.
pub fn key_hash_of(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(hasher.finalize())
}

/// Short deterministic identifier (12 hex chars) derived from `parts`, used
/// for run ids so identical task parameters share an id.
pub fn short_id_of(parts: &[&str]) -> String {
    key_hash_of(parts)[..12].to_string()
}

/// Append-only JSON-lines store, one file per [`RunKind`].
pub struct RunStore {
    dir: PathBuf,
    index: Mutex<HashMap<(RunKind, String), RunRecord>>,
    stats: RunStats,
}

impl RunStore {
    /// Opens (or creates) the store at `dir` and loads all existing records.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let mut index = HashMap::new();
        for kind in RunKind::ALL {
            let path = dir.join(kind.file_name());
            if !path.exists() {
                continue;
            }
            let content = std::fs::read_to_string(&path)?;
            for (line_no, line) in content.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let record: RunRecord = serde_json::from_str(line).map_err(|e| {
                    StoreError::StoreCorrupt(format!(
                        "{} line {}: {}",
                        path.display(),
                        line_no + 1,
                        e
                    ))
                })?;
                index.insert((record.kind, record.key_hash.clone()), record);
            }
        }
        Ok(RunStore {
            dir: dir.to_path_buf(),
            index: Mutex::new(index),
            stats: RunStats::default(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    /// Looks up a record, verifying its payload checksum.
    pub fn get(&self, kind: RunKind, key_hash: &str) -> Result<Option<RunRecord>, StoreError> {
        let index = self.index.lock().expect("store index poisoned");
        match index.get(&(kind, key_hash.to_string())) {
            Some(record) => {
                let expected = payload_checksum(&record.payload);
                if expected != record.checksum {
                    return Err(StoreError::StoreCorrupt(format!(
                        "record {kind}/{key_hash} failed checksum validation"
                    )));
                }
                self.stats.store_hits.fetch_add(1, Ordering::SeqCst);
                Ok(Some(record.clone()))
            }
            None => Ok(None),
        }
    }

    /// Inserts a record unless the key already exists; existing records are
    /// returned untouched, keeping the store append-only and `put`
    /// idempotent.
    pub fn put(
        &self,
        run_id: &str,
        kind: RunKind,
        key_hash: &str,
        payload: serde_json::Value,
    ) -> Result<RunRecord, StoreError> {
        let mut index = self.index.lock().expect("store index poisoned");
        if let Some(existing) = index.get(&(kind, key_hash.to_string())) {
            return Ok(existing.clone());
        }
        let record = RunRecord {
            run_id: run_id.to_string(),
            kind,
            key_hash: key_hash.to_string(),
            checksum: payload_checksum(&payload),
            payload,
            created_at: Utc::now(),
        };
        let line = serde_json::to_string(&record)?;
        let path = self.dir.join(kind.file_name());
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
        self.stats.store_writes.fetch_add(1, Ordering::SeqCst);
        index.insert((kind, key_hash.to_string()), record.clone());
        Ok(record)
    }

    /// All records of one kind, sorted by key hash for deterministic output.
    pub fn records(&self, kind: RunKind) -> Vec<RunRecord> {
        let index = self.index.lock().expect("store index poisoned");
        let mut records: Vec<_> = index
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|(_, r)| r.clone())
            .collect();
        records.sort_by(|a, b| a.key_hash.cmp(&b.key_hash));
        records
    }
}
