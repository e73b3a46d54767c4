//! The request pipeline:
//! authenticate, authorize, rate limit, validate, cache lookup, dispatch,
//! cache store, audit append. Every request except `/healthz` produces
//! exactly one audit record, whatever the outcome, and the record is
//! written before the response is released.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;
use xsys_core::contracts::schema::lookup_schema_file;
use xsys_core::contracts::{
    canonical_serialize, to_canonical_bytes, validate, value_to_canonical_bytes, ErrorEnvelope, ModelSpec,
    ReplayReport,
};
use xsys_core::digest::sha256_hex;
use xsys_core::{Error, ErrorCode, Result};

use crate::audit::{AuditLog, AuditRecord, PendingRecord, OUTCOME_OK};
use crate::auth::TokenMap;
use crate::backend::{Backend, Call, CallKind, Pins};
use crate::cache::{CacheKey, ResponseCache};
use crate::policy::{authorize, Decision, Principal};
use crate::ratelimit::{Clock, RateLimit, RateLimiter, SystemClock};
use crate::routes::{match_route, Endpoint};
use crate::sessions::{AuditSummary, Session, SessionHistory, SessionRestore, SessionStore};

pub const ANONYMOUS: &str = "anonymous";
const DEFAULT_AUDIT_PAGE: usize = 100;
const MAX_AUDIT_PAGE: usize = 1000;

/// Settings that affect responses or governance. Its digest goes into
/// every audit record; tokens are deliberately not part of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub rate_limit: RateLimit,
    pub cache_capacity: usize,
    pub audit_fsync: bool,
    pub lrp_epsilon: f64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            rate_limit: RateLimit::default(),
            cache_capacity: 4096,
            audit_fsync: true,
            lrp_epsilon: xsys_core::lrp::DEFAULT_EPSILON,
        }
    }
}

impl GatewayConfig {
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&to_canonical_bytes(self)?))
    }
}

#[derive(Debug, Clone, Default)]
pub struct GatewayRequest {
    pub method: String,
    /// Path without the query string.
    pub path: String,
    pub query: BTreeMap<String, String>,
    pub body: Vec<u8>,
    /// Raw `Authorization` header.
    pub authorization: Option<String>,
    /// Raw `X-Session-Id` header.
    pub session_id: Option<String>,
}

impl GatewayRequest {
    pub fn new(method: &str, path: &str) -> Self {
        GatewayRequest {
            method: method.to_string(),
            path: path.to_string(),
            ..Default::default()
        }
    }

    pub fn bearer(mut self, token: &str) -> Self {
        self.authorization = Some(format!("Bearer {token}"));
        self
    }

    pub fn json(mut self, body: impl Into<Vec<u8>>) -> Self {
        self.body = body.into();
        self
    }

    pub fn session(mut self, id: &str) -> Self {
        self.session_id = Some(id.to_string());
        self
    }

    pub fn query(mut self, key: &str, value: &str) -> Self {
        self.query.insert(key.to_string(), value.to_string());
        self
    }
}

#[derive(Debug, Clone)]
pub struct GatewayResponse {
    pub status: u16,
    pub body: Arc<Vec<u8>>,
    pub trace_id: Option<String>,
    pub audit_id: Option<u64>,
    pub cache_hit: bool,
}

impl GatewayResponse {
    pub fn is_ok(&self) -> bool {
        self.status == 200
    }

    /// Error code carried by a non-200 body.
    pub fn error_code(&self) -> Option<ErrorCode> {
        serde_json::from_slice::<ErrorEnvelope>(&self.body).ok().map(|e| e.code)
    }
}

/// Audit fields filled in as the request moves through the pipeline.
struct Trail {
    principal: Option<Principal>,
    endpoint: String,
    request_body: Vec<u8>,
    request_digest: String,
    pins: Pins,
    cache_hit: bool,
    session_id: Option<String>,
}

pub struct Gateway {
    backend: Backend,
    tokens: TokenMap,
    limiter: RateLimiter,
    cache: ResponseCache,
    audit: AuditLog,
    sessions: SessionStore,
    config_digest: String,
}

impl Gateway {
    /// Audit log and sessions live under `state_dir`.
    pub fn new(
        backend: Backend,
        tokens: TokenMap,
        config: &GatewayConfig,
        state_dir: &Path,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        Ok(Gateway {
            backend,
            tokens,
            limiter: RateLimiter::new(config.rate_limit, clock),
            cache: ResponseCache::new(config.cache_capacity),
            audit: AuditLog::open(state_dir.join("audit"), config.audit_fsync)?,
            sessions: SessionStore::open(state_dir.join("sessions"))?,
            config_digest: config.digest()?,
        })
    }

    /// Opens the artifact store at `store_root` with the system clock.
    pub fn open(store_root: &Path, state_dir: &Path, tokens: TokenMap, config: &GatewayConfig) -> Result<Self> {
        let backend = Backend::open(store_root, config.lrp_epsilon)?;
        Self::new(backend, tokens, config, state_dir, Arc::new(SystemClock::default()))
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn audit_path(&self) -> PathBuf {
        self.audit.path()
    }

    pub fn cache(&self) -> &ResponseCache {
        &self.cache
    }

    pub fn config_digest(&self) -> &str {
        &self.config_digest
    }

    pub fn route(&self, req: &GatewayRequest) -> GatewayResponse {
        let trace_id = uuid::Uuid::new_v4().to_string();
        let matched = match_route(&req.method, &req.path, &req.query, &req.body);
        if let Ok(r) = &matched {
            if r.endpoint == Endpoint::Health {
                return GatewayResponse {
                    status: 200,
                    body: Arc::new(br#"{"status":"ok"}"#.to_vec()),
                    trace_id: None,
                    audit_id: None,
                    cache_hit: false,
                };
            }
        }
        let (endpoint_label, request_body) = match &matched {
            Ok(r) => (r.endpoint.template().to_string(), r.body.clone()),
            Err(_) => (format!("{} {}", req.method, req.path), req.body.clone()),
        };
        let mut trail = Trail {
            principal: None,
            endpoint: endpoint_label,
            request_digest: sha256_hex(&request_body),
            request_body,
            pins: Pins::default(),
            cache_hit: false,
            session_id: None,
        };
        let result = matched.and_then(|r| self.pipeline(req, &r.endpoint, &r.body, &mut trail));
        let result = result.and_then(|bytes| {
            // Restore needs the exact bytes; stored before the record that points at them.
            if trail.session_id.is_some() {
                self.audit.put_response(&sha256_hex(&bytes), &bytes)?;
            }
            Ok(bytes)
        });
        let (status, body, outcome) = match result {
            Ok(bytes) => (200, bytes, OUTCOME_OK.to_string()),
            Err(e) => {
                let code = e.code();
                let env = ErrorEnvelope::from_error(&e, trace_id.clone());
                let bytes = canonical_serialize(&env).unwrap_or_default();
                (code.http_status(), Arc::new(bytes), code.as_str().to_string())
            }
        };
        let pending = PendingRecord {
            trace_id: trace_id.clone(),
            principal_id: trail
                .principal
                .as_ref()
                .map_or(ANONYMOUS.to_string(), |p| p.principal_id.clone()),
            role: trail.principal.as_ref().map(|p| p.role),
            endpoint: trail.endpoint,
            request_digest: trail.request_digest,
            request_body: trail.request_body,
            model_version: trail.pins.model_version,
            data_version: trail.pins.data_version,
            aux_versions: trail.pins.aux_versions,
            config_digest: self.config_digest.clone(),
            response_digest: sha256_hex(&body),
            outcome,
            cache_hit: trail.cache_hit,
            session_id: trail.session_id,
        };
        match self.audit.append(pending) {
            Ok(record) => GatewayResponse {
                status,
                body,
                trace_id: Some(trace_id),
                audit_id: Some(record.audit_id),
                cache_hit: trail.cache_hit,
            },
            Err(e) => {
                // Fail closed: nothing computed is released without its record.
                let env = ErrorEnvelope::from_error(&e, trace_id.clone());
                GatewayResponse {
                    status: 500,
                    body: Arc::new(canonical_serialize(&env).unwrap_or_default()),
                    trace_id: Some(trace_id),
                    audit_id: None,
                    cache_hit: false,
                }
            }
        }
    }

    fn pipeline(&self, req: &GatewayRequest, endpoint: &Endpoint, body: &[u8], trail: &mut Trail) -> Result<Arc<Vec<u8>>> {
        let principal = self.tokens.authenticate(req.authorization.as_deref())?;
        trail.principal = Some(principal.clone());

        let capability = endpoint.capability(body);
        if authorize(principal.role, capability) == Decision::Deny {
            return Err(Error::Forbidden(format!(
                "role {} lacks capability {capability:?}",
                principal.role
            )));
        }
        if !self.limiter.try_acquire(&principal.principal_id) {
            return Err(Error::RateLimited(format!("rate limit exceeded for {}", principal.principal_id)));
        }
        if let Some(sid) = &req.session_id {
            if endpoint.is_interaction() {
                self.sessions.check_owner(sid, &principal)?;
                trail.session_id = Some(sid.clone());
            }
        }

        match endpoint {
            Endpoint::Call(kind) => self.call(*kind, body, trail),
            Endpoint::ListModels => Ok(Arc::new(to_canonical_bytes(&self.backend.models.list_models()?)?)),
            Endpoint::RegisterModel => {
                let spec: ModelSpec = validate(body)?;
                trail.request_digest = sha256_hex(&canonical_serialize(&spec)?);
                let r = self.backend.models.register_model(&spec)?;
                trail.pins.model_version = Some(r.clone());
                Ok(Arc::new(canonical_serialize(&r)?))
            }
            Endpoint::AuditList => {
                let from = query_number(&req.query, "from")?.unwrap_or(1);
                let limit = query_number(&req.query, "limit")?
                    .map_or(DEFAULT_AUDIT_PAGE, |l| (l as usize).min(MAX_AUDIT_PAGE));
                Ok(Arc::new(to_canonical_bytes(&self.audit.range(from, limit)?)?))
            }
            Endpoint::Replay(id) => {
                let (report, pins) = self.replay(*id)?;
                trail.pins = pins;
                Ok(Arc::new(canonical_serialize(&report)?))
            }
            Endpoint::SessionCreate => {
                let meta = self.sessions.create(&principal)?;
                let session = Session {
                    session_id: meta.session_id,
                    principal_id: meta.principal_id,
                    created_at: meta.created_at,
                    interactions: Vec::new(),
                };
                Ok(Arc::new(to_canonical_bytes(&session)?))
            }
            Endpoint::SessionHistory(sid) => {
                self.sessions.check_reader(sid, &principal)?;
                Ok(Arc::new(to_canonical_bytes(&self.history(sid)?)?))
            }
            Endpoint::SessionRestore(sid) => {
                self.sessions.check_reader(sid, &principal)?;
                Ok(Arc::new(self.restore(sid)?))
            }
            Endpoint::Schema(file) => {
                let (_, doc) = lookup_schema_file(file).ok_or_else(|| Error::not_found(format!("schema {file}")))?;
                Ok(Arc::new(value_to_canonical_bytes(&doc)?))
            }
            Endpoint::Health => Err(Error::internal("health is not routed through the pipeline")),
        }
    }

    fn call(&self, kind: CallKind, body: &[u8], trail: &mut Trail) -> Result<Arc<Vec<u8>>> {
        let call = Call::parse(kind, body)?;
        trail.request_digest = sha256_hex(&call.canonical_bytes()?);
        trail.pins = self.backend.resolve(&call)?;
        let key = call.cacheable().then(|| CacheKey {
            endpoint: kind.template().to_string(),
            request_digest: trail.request_digest.clone(),
            model_version: trail.pins.model_version.clone(),
            data_version: trail.pins.data_version.clone(),
            aux_versions: trail.pins.aux_versions.clone(),
        });
        if let Some(key) = &key {
            if let Some(bytes) = self.cache.get(key) {
                trail.cache_hit = true;
                return Ok(bytes);
            }
        }
        let bytes = Arc::new(self.backend.execute(&call, &trail.pins)?);
        if let Some(key) = key {
            self.cache.put(key, bytes.clone());
        }
        Ok(bytes)
    }

    /// Re-executes an audited request against its pinned versions, bypassing the cache.
    pub fn replay(&self, audit_id: u64) -> Result<(ReplayReport, Pins)> {
        let record = self.audit.get(audit_id)?;
        let kind = replayable(&record)?;
        let pins = Pins {
            model_version: record.model_version.clone(),
            data_version: record.data_version.clone(),
            aux_versions: record.aux_versions.clone(),
        };
        for r in pins.all() {
            if !self.backend.store().contains(r) {
                return Err(Error::not_found(format!("pinned version {r} of audit record {audit_id}")));
            }
        }
        let call = Call::parse(kind, &record.request_bytes()?)?;
        let bytes = self.backend.execute(&call, &pins)?;
        let replayed_digest = sha256_hex(&bytes);
        Ok((
            ReplayReport {
                audit_id,
                matched: replayed_digest == record.response_digest,
                original_digest: record.response_digest,
                replayed_digest,
            },
            pins,
        ))
    }

    pub fn history(&self, session_id: &str) -> Result<SessionHistory> {
        let interactions = self
            .audit
            .session_interactions(session_id)
            .into_iter()
            .map(|id| self.audit.get(id).map(|r| AuditSummary::from(&r)))
            .collect::<Result<Vec<_>>>()?;
        Ok(SessionHistory {
            session_id: session_id.to_string(),
            interactions,
        })
    }

    fn restore(&self, session_id: &str) -> Result<Vec<u8>> {
        for id in self.audit.session_interactions(session_id).into_iter().rev() {
            let record = self.audit.get(id)?;
            if !record.is_ok() {
                continue;
            }
            let raw = |bytes: Vec<u8>| {
                String::from_utf8(bytes)
                    .ok()
                    .and_then(|s| RawValue::from_string(s).ok())
                    .ok_or_else(|| Error::internal(format!("audit record {id} holds non-JSON bytes")))
            };
            let restore = SessionRestore {
                session_id: session_id.to_string(),
                audit_id: id,
                endpoint: record.endpoint.clone(),
                request: raw(record.request_bytes()?)?,
                response: raw(self.audit.get_response(&record.response_digest)?)?,
            };
            return Ok(serde_json::to_vec(&restore)?);
        }
        Err(Error::not_found(format!("session {session_id} has no successful interaction")))
    }
}

/// Successful records of the read-only service calls.
pub fn replayable(record: &AuditRecord) -> Result<CallKind> {
    if !record.is_ok() {
        return Err(Error::invalid(format!(
            "audit record {} has outcome {} and is not replayable",
            record.audit_id, record.outcome
        )));
    }
    CallKind::from_template(&record.endpoint).ok_or_else(|| {
        Error::invalid(format!(
            "audit record {} ({}) is not a replayable endpoint",
            record.audit_id, record.endpoint
        ))
    })
}

fn query_number(query: &BTreeMap<String, String>, key: &str) -> Result<Option<u64>> {
    query
        .get(key)
        .map(|v| v.parse().map_err(|_| Error::invalid(format!("query parameter `{key}` must be an integer"))))
        .transpose()
}
