//! Append-only, hash-chained audit log.
//!
//! One canonical JSON record per line in `audit.jsonl`. `record_hash` is the
//! SHA-256 of the record's canonical bytes with `record_hash` omitted, so it
//! covers `prev_hash`; the genesis record links to the all-zero digest.
//! Appends go through one writer lock. A failed write poisons the log and
//! every later append fails: requests are never answered without a record.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use xsys_core::contracts::{to_canonical_bytes, value_to_canonical_bytes, VersionRef};
use xsys_core::digest::{is_digest_hex, sha256_hex, ZERO_DIGEST};
use xsys_core::store::now_nanos;
use xsys_core::{Error, Result};

use crate::policy::Role;

pub const LOG_FILE: &str = "audit.jsonl";
const LOCK_FILE: &str = "audit.lock";
const RESPONSES_DIR: &str = "responses";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditRecord {
    pub audit_id: u64,
    pub trace_id: String,
    /// UTC nanoseconds.
    pub timestamp: u64,
    pub principal_id: String,
    pub role: Option<Role>,
    pub endpoint: String,
    pub request_digest: String,
    /// Raw request bytes, base64.
    pub request_body: String,
    pub model_version: Option<VersionRef>,
    pub data_version: Option<VersionRef>,
    pub aux_versions: Vec<VersionRef>,
    pub config_digest: String,
    pub response_digest: String,
    /// `OK` or an error code.
    pub outcome: String,
    pub cache_hit: bool,
    pub session_id: Option<String>,
    pub prev_hash: String,
    pub record_hash: String,
}

impl AuditRecord {
    pub fn request_bytes(&self) -> Result<Vec<u8>> {
        B64.decode(&self.request_body)
            .map_err(|e| Error::internal(format!("audit {}: bad request_body: {e}", self.audit_id)))
    }

    pub fn is_ok(&self) -> bool {
        self.outcome == OUTCOME_OK
    }

    /// Hash over every field except `record_hash`.
    pub fn compute_hash(&self) -> Result<String> {
        let mut v = serde_json::to_value(self)?;
        if let Some(map) = v.as_object_mut() {
            map.remove("record_hash");
        }
        Ok(sha256_hex(&value_to_canonical_bytes(&v)?))
    }
}

pub const OUTCOME_OK: &str = "OK";

/// Everything the caller supplies; id, time and chain fields are assigned on append.
#[derive(Debug, Clone)]
pub struct PendingRecord {
    pub trace_id: String,
    pub principal_id: String,
    pub role: Option<Role>,
    pub endpoint: String,
    pub request_digest: String,
    pub request_body: Vec<u8>,
    pub model_version: Option<VersionRef>,
    pub data_version: Option<VersionRef>,
    pub aux_versions: Vec<VersionRef>,
    pub config_digest: String,
    pub response_digest: String,
    pub outcome: String,
    pub cache_hit: bool,
    pub session_id: Option<String>,
}

/// Result of checking a log file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ChainStatus {
    /// Records that parsed, in order, before the first break (or all of them).
    pub records: u64,
    /// 1-based position of the first record that fails verification.
    pub first_break: Option<u64>,
}

impl ChainStatus {
    pub fn is_valid(&self) -> bool {
        self.first_break.is_none()
    }
}

/// Verifies every line: canonical encoding, gap-free ids, links and hashes.
pub fn verify_chain(path: &Path) -> Result<ChainStatus> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let mut prev = ZERO_DIGEST.to_string();
    let mut n = 0u64;
    let mut rest = &bytes[..];
    while !rest.is_empty() {
        let position = n + 1;
        let broken = Ok(ChainStatus { records: n, first_break: Some(position) });
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return broken;
        };
        let line = &rest[..end];
        rest = &rest[end + 1..];
        let Ok(record) = serde_json::from_slice::<AuditRecord>(line) else {
            return broken;
        };
        let canonical = to_canonical_bytes(&record).ok();
        let hash_ok = record.compute_hash().ok().as_deref() == Some(record.record_hash.as_str());
        if canonical.as_deref() != Some(line)
            || record.audit_id != position
            || record.prev_hash != prev
            || !is_digest_hex(&record.record_hash)
            || !hash_ok
        {
            return broken;
        }
        prev = record.record_hash;
        n = position;
    }
    Ok(ChainStatus { records: n, first_break: None })
}

struct Writer {
    file: File,
    next_id: u64,
    last_hash: String,
    /// Byte offset of each record's line; index = audit_id - 1.
    offsets: Vec<u64>,
    end: u64,
    by_session: HashMap<String, Vec<u64>>,
    poisoned: bool,
}

pub struct AuditLog {
    dir: PathBuf,
    fsync: bool,
    writer: Mutex<Writer>,
    // Held for the log's lifetime: one writing process per log.
    _lock: File,
}

impl AuditLog {
    /// Opens or creates the log in `dir`. Refuses a log whose chain is broken.
    pub fn open(dir: impl Into<PathBuf>, fsync: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(dir.join(RESPONSES_DIR))?;
        let lock = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(LOCK_FILE))?;
        lock.try_lock().map_err(|_| {
            Error::internal(format!("audit log in {} is held by another process", dir.display()))
        })?;
        let path = dir.join(LOG_FILE);
        let status = verify_chain(&path)?;
        if let Some(k) = status.first_break {
            return Err(Error::internal(format!(
                "audit log {} is broken at record {k}; refusing to append",
                path.display()
            )));
        }
        let mut offsets = Vec::new();
        let mut by_session: HashMap<String, Vec<u64>> = HashMap::new();
        let mut last_hash = ZERO_DIGEST.to_string();
        let mut end = 0u64;
        if path.exists() {
            let mut reader = BufReader::new(File::open(&path)?);
            let mut line = String::new();
            loop {
                line.clear();
                let read = reader.read_line(&mut line)?;
                if read == 0 {
                    break;
                }
                let record: AuditRecord = serde_json::from_str(line.trim_end())?;
                offsets.push(end);
                end += read as u64;
                if let Some(s) = &record.session_id {
                    by_session.entry(s.clone()).or_default().push(record.audit_id);
                }
                last_hash = record.record_hash;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(AuditLog {
            dir,
            fsync,
            writer: Mutex::new(Writer {
                file,
                next_id: offsets.len() as u64 + 1,
                last_hash,
                offsets,
                end,
                by_session,
                poisoned: false,
            }),
            _lock: lock,
        })
    }

    pub fn path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn len(&self) -> u64 {
        self.writer.lock().offsets.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists and chains one record. The record is durable (per the fsync
    /// setting) when this returns.
    pub fn append(&self, pending: PendingRecord) -> Result<AuditRecord> {
        let mut w = self.writer.lock();
        if w.poisoned {
            return Err(Error::internal("audit log unavailable after a failed write"));
        }
        let mut record = AuditRecord {
            audit_id: w.next_id,
            trace_id: pending.trace_id,
            timestamp: now_nanos(),
            principal_id: pending.principal_id,
            role: pending.role,
            endpoint: pending.endpoint,
            request_digest: pending.request_digest,
            request_body: B64.encode(&pending.request_body),
            model_version: pending.model_version,
            data_version: pending.data_version,
            aux_versions: pending.aux_versions,
            config_digest: pending.config_digest,
            response_digest: pending.response_digest,
            outcome: pending.outcome,
            cache_hit: pending.cache_hit,
            session_id: pending.session_id,
            prev_hash: w.last_hash.clone(),
            record_hash: String::new(),
        };
        record.record_hash = record.compute_hash()?;
        let mut line = to_canonical_bytes(&record)?;
        line.push(b'\n');
        let written = w.file.write_all(&line).and_then(|_| {
            if self.fsync {
                w.file.sync_data()
            } else {
                Ok(())
            }
        });
        if let Err(e) = written {
            w.poisoned = true;
            return Err(Error::internal(format!("audit append failed: {e}")));
        }
        let offset = w.end;
        w.offsets.push(offset);
        w.end += line.len() as u64;
        w.next_id += 1;
        w.last_hash = record.record_hash.clone();
        if let Some(s) = &record.session_id {
            w.by_session.entry(s.clone()).or_default().push(record.audit_id);
        }
        Ok(record)
    }

    pub fn get(&self, audit_id: u64) -> Result<AuditRecord> {
        let offset = {
            let w = self.writer.lock();
            audit_id
                .checked_sub(1)
                .and_then(|i| w.offsets.get(i as usize).copied())
                .ok_or_else(|| Error::not_found(format!("audit record {audit_id}")))?
        };
        let mut reader = BufReader::new(File::open(self.path())?);
        reader.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        reader.read_line(&mut line)?;
        Ok(serde_json::from_str(line.trim_end())?)
    }

    /// Records `from..from+limit` in id order.
    pub fn range(&self, from: u64, limit: usize) -> Result<Vec<AuditRecord>> {
        let last = self.len();
        let from = from.max(1);
        (from..=last).take(limit).map(|id| self.get(id)).collect()
    }

    /// Audit ids recorded under a session, ascending.
    pub fn session_interactions(&self, session_id: &str) -> Vec<u64> {
        self.writer.lock().by_session.get(session_id).cloned().unwrap_or_default()
    }

    /// Stores response bytes by digest so sessions can be restored verbatim.
    pub fn put_response(&self, digest: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(RESPONSES_DIR).join(digest);
        if path.exists() {
            return Ok(());
        }
        let tmp = self.dir.join(RESPONSES_DIR).join(format!(".{digest}.{}", uuid::Uuid::new_v4()));
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        if self.fsync {
            f.sync_data()?;
        }
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn get_response(&self, digest: &str) -> Result<Vec<u8>> {
        if !is_digest_hex(digest) {
            return Err(Error::invalid("malformed response digest"));
        }
        let mut bytes = Vec::new();
        File::open(self.dir.join(RESPONSES_DIR).join(digest))
            .map_err(|_| Error::not_found(format!("response {digest}")))?
            .read_to_end(&mut bytes)?;
        Ok(bytes)
    }
}
