//! Sessions. Only ownership metadata is stored here; the interaction list
//! is the set of audit records tagged with the session id, so it cannot
//! drift from the log.

use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use xsys_core::store::now_nanos;
use xsys_core::{Error, Result};

use crate::audit::AuditRecord;
use crate::policy::{may_read_session, Principal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionMeta {
    pub session_id: String,
    pub principal_id: String,
    /// UTC nanoseconds.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Session {
    pub session_id: String,
    pub principal_id: String,
    pub created_at: u64,
    /// Ascending audit ids.
    pub interactions: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditSummary {
    pub audit_id: u64,
    pub trace_id: String,
    pub timestamp: u64,
    pub endpoint: String,
    pub outcome: String,
    pub cache_hit: bool,
    pub request_digest: String,
    pub response_digest: String,
}

impl From<&AuditRecord> for AuditSummary {
    fn from(r: &AuditRecord) -> Self {
        AuditSummary {
            audit_id: r.audit_id,
            trace_id: r.trace_id.clone(),
            timestamp: r.timestamp,
            endpoint: r.endpoint.clone(),
            outcome: r.outcome.clone(),
            cache_hit: r.cache_hit,
            request_digest: r.request_digest.clone(),
            response_digest: r.response_digest.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHistory {
    pub session_id: String,
    pub interactions: Vec<AuditSummary>,
}

/// Last successful interaction, request and response embedded verbatim.
#[derive(Debug, Serialize)]
pub struct SessionRestore {
    pub session_id: String,
    pub audit_id: u64,
    pub endpoint: String,
    pub request: Box<RawValue>,
    pub response: Box<RawValue>,
}

pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionMeta>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let meta: SessionMeta = serde_json::from_slice(&fs::read(&path)?)
                .map_err(|e| Error::internal(format!("session file {}: {e}", path.display())))?;
            sessions.insert(meta.session_id.clone(), meta);
        }
        Ok(SessionStore {
            dir,
            sessions: RwLock::new(sessions),
        })
    }

    pub fn create(&self, principal: &Principal) -> Result<SessionMeta> {
        let meta = SessionMeta {
            session_id: uuid::Uuid::new_v4().to_string(),
            principal_id: principal.principal_id.clone(),
            created_at: now_nanos(),
        };
        let path = self.dir.join(format!("{}.json", meta.session_id));
        let tmp = self.dir.join(format!(".{}.tmp", meta.session_id));
        fs::write(&tmp, serde_json::to_vec(&meta)?)?;
        fs::rename(&tmp, &path)?;
        self.sessions.write().insert(meta.session_id.clone(), meta.clone());
        Ok(meta)
    }

    pub fn get(&self, session_id: &str) -> Result<SessionMeta> {
        self.sessions
            .read()
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::not_found(format!("session {session_id}")))
    }

    /// For tagging new interactions: the owner only.
    pub fn check_owner(&self, session_id: &str, principal: &Principal) -> Result<SessionMeta> {
        let meta = self.get(session_id)?;
        if meta.principal_id != principal.principal_id {
            return Err(Error::Forbidden(format!("session {session_id} belongs to another principal")));
        }
        Ok(meta)
    }

    /// For history and restore: owner or auditor.
    pub fn check_reader(&self, session_id: &str, principal: &Principal) -> Result<SessionMeta> {
        let meta = self.get(session_id)?;
        if !may_read_session(principal, &meta.principal_id) {
            return Err(Error::Forbidden(format!("session {session_id} belongs to another principal")));
        }
        Ok(meta)
    }
}
