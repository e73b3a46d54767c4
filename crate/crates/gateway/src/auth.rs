//! Static bearer-token authentication.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use xsys_core::{Error, Result};

use crate::policy::Principal;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenMap(pub HashMap<String, Principal>);

impl TokenMap {
    pub fn insert(&mut self, token: impl Into<String>, principal: Principal) {
        self.0.insert(token.into(), principal);
    }

    /// Resolves an `Authorization` header value of the form `Bearer <token>`.
    pub fn authenticate(&self, header: Option<&str>) -> Result<Principal> {
        let header = header.ok_or_else(|| Error::Unauthenticated("missing bearer token".into()))?;
        let token = header
            .strip_prefix("Bearer ")
            .or_else(|| header.strip_prefix("bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| Error::Unauthenticated("malformed Authorization header".into()))?;
        self.0
            .get(token)
            .cloned()
            .ok_or_else(|| Error::Unauthenticated("unknown token".into()))
    }
}
