//! Principals, roles and the static authorization matrix.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Developer,
    Auditor,
    EndUser,
}

impl Role {
    pub const ALL: [Role; 3] = [Role::Developer, Role::Auditor, Role::EndUser];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Developer => "developer",
            Role::Auditor => "auditor",
            Role::EndUser => "end_user",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Principal {
    pub principal_id: String,
    pub role: Role,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Search,
    /// Read-only inspection: inspect without steering, compare, components, models.
    Inspect,
    /// Any request that carries steering modifiers, including what-if.
    Steering,
    ModelRegister,
    AuditRead,
    Replay,
    /// Session create/history/restore; ownership is checked separately.
    SessionHistory,
}

impl Capability {
    pub const ALL: [Capability; 7] = [
        Capability::Search,
        Capability::Inspect,
        Capability::Steering,
        Capability::ModelRegister,
        Capability::AuditRead,
        Capability::Replay,
        Capability::SessionHistory,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Allow,
    Deny,
}

/// Total over every `(role, capability)` pair.
pub fn authorize(role: Role, capability: Capability) -> Decision {
    use Capability::*;
    let allowed = match capability {
        Search | Inspect | SessionHistory => true,
        Steering | ModelRegister => role == Role::Developer,
        AuditRead | Replay => matches!(role, Role::Developer | Role::Auditor),
    };
    if allowed {
        Decision::Allow
    } else {
        Decision::Deny
    }
}

/// Session access beyond the capability check: owner or auditor.
pub fn may_read_session(principal: &Principal, owner: &str) -> bool {
    principal.principal_id == owner || principal.role == Role::Auditor
}
