//! Path matching. Path parameters become a canonical JSON request body so
//! that every audited request has bytes to digest and replay.

use std::collections::BTreeMap;

use serde_json::{json, Value};
use xsys_core::contracts::value_to_canonical_bytes;
use xsys_core::{Error, Result};

use crate::backend::CallKind;
use crate::policy::Capability;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Health,
    Call(CallKind),
    ListModels,
    RegisterModel,
    AuditList,
    Replay(u64),
    SessionCreate,
    SessionHistory(String),
    SessionRestore(String),
    Schema(String),
}

impl Endpoint {
    /// Audit endpoint label; path parameters are replaced by their names.
    pub fn template(&self) -> &'static str {
        match self {
            Endpoint::Health => "GET /healthz",
            Endpoint::Call(k) => k.template(),
            Endpoint::ListModels => "GET /api/models",
            Endpoint::RegisterModel => "POST /api/models",
            Endpoint::AuditList => "GET /api/audit",
            Endpoint::Replay(_) => "POST /api/audit/{audit_id}/replay",
            Endpoint::SessionCreate => "POST /api/sessions",
            Endpoint::SessionHistory(_) => "GET /api/sessions/{session_id}/history",
            Endpoint::SessionRestore(_) => "GET /api/sessions/{session_id}/restore",
            Endpoint::Schema(_) => "GET /schemas/{file}",
        }
    }

    /// `body` is only consulted for `/api/inspect`, where non-empty
    /// `steering` requires the steering capability.
    pub fn capability(&self, body: &[u8]) -> Capability {
        match self {
            Endpoint::Call(CallKind::Search) => Capability::Search,
            Endpoint::Call(CallKind::WhatIf) => Capability::Steering,
            Endpoint::Call(CallKind::Inspect) if requests_steering(body) => Capability::Steering,
            Endpoint::Call(_) | Endpoint::ListModels | Endpoint::Schema(_) | Endpoint::Health => Capability::Inspect,
            Endpoint::RegisterModel => Capability::ModelRegister,
            Endpoint::AuditList => Capability::AuditRead,
            Endpoint::Replay(_) => Capability::Replay,
            Endpoint::SessionCreate | Endpoint::SessionHistory(_) | Endpoint::SessionRestore(_) => {
                Capability::SessionHistory
            }
        }
    }

    /// Requests that can be recorded into a session via `X-Session-Id`.
    pub fn is_interaction(&self) -> bool {
        matches!(self, Endpoint::Call(_) | Endpoint::ListModels | Endpoint::RegisterModel)
    }
}

fn requests_steering(body: &[u8]) -> bool {
    serde_json::from_slice::<Value>(body)
        .ok()
        .and_then(|v| v.get("steering").and_then(Value::as_array).map(|a| !a.is_empty()))
        .unwrap_or(false)
}

/// A matched route plus the bytes recorded as its request body.
#[derive(Debug, Clone)]
pub struct Route {
    pub endpoint: Endpoint,
    pub body: Vec<u8>,
}

fn canonical(v: Value) -> Vec<u8> {
    value_to_canonical_bytes(&v).expect("path parameters are plain JSON")
}

pub fn match_route(method: &str, path: &str, query: &BTreeMap<String, String>, body: &[u8]) -> Result<Route> {
    let segments: Vec<&str> = path.trim_end_matches('/').split('/').skip(1).collect();
    let raw = || body.to_vec();
    let route = |endpoint, body| Ok(Route { endpoint, body });
    match (method, segments.as_slice()) {
        ("GET", ["healthz"]) => route(Endpoint::Health, Vec::new()),
        ("POST", ["api", "search"]) => route(Endpoint::Call(CallKind::Search), raw()),
        ("POST", ["api", "inspect"]) => route(Endpoint::Call(CallKind::Inspect), raw()),
        ("POST", ["api", "whatif"]) => route(Endpoint::Call(CallKind::WhatIf), raw()),
        ("POST", ["api", "compare"]) => route(Endpoint::Call(CallKind::Compare), raw()),
        ("GET", ["api", "components", net]) => route(
            Endpoint::Call(CallKind::Components),
            canonical(json!({ "network_id": net })),
        ),
        ("GET", ["api", "components", net, id]) => {
            let neuron_id: u64 = id
                .parse()
                .map_err(|_| Error::invalid(format!("neuron id `{id}` is not a non-negative integer")))?;
            route(
                Endpoint::Call(CallKind::Component),
                canonical(json!({ "network_id": net, "neuron_id": neuron_id })),
            )
        }
        ("GET", ["api", "models"]) => route(Endpoint::ListModels, canonical(json!({}))),
        ("POST", ["api", "models"]) => route(Endpoint::RegisterModel, raw()),
        ("GET", ["api", "audit"]) => route(Endpoint::AuditList, canonical(json!(query))),
        ("POST", ["api", "audit", id, "replay"]) => {
            let audit_id: u64 = id
                .parse()
                .map_err(|_| Error::invalid(format!("audit id `{id}` is not a non-negative integer")))?;
            route(Endpoint::Replay(audit_id), canonical(json!({ "audit_id": audit_id })))
        }
        ("POST", ["api", "sessions"]) => route(Endpoint::SessionCreate, canonical(json!({}))),
        ("GET", ["api", "sessions", id, "history"]) => route(
            Endpoint::SessionHistory(id.to_string()),
            canonical(json!({ "session_id": id })),
        ),
        ("GET", ["api", "sessions", id, "restore"]) => route(
            Endpoint::SessionRestore(id.to_string()),
            canonical(json!({ "session_id": id })),
        ),
        ("GET", ["schemas", file]) => route(Endpoint::Schema(file.to_string()), canonical(json!({ "file": file }))),
        _ => Err(Error::not_found(format!("no route for {method} {path}"))),
    }
}
