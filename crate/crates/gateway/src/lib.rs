//! Governance gateway for the xsys services.

pub mod audit;
pub mod auth;
pub mod backend;
pub mod cache;
mod gateway;
pub mod policy;
pub mod ratelimit;
pub mod routes;
pub mod sessions;

pub use audit::{verify_chain, AuditLog, AuditRecord, ChainStatus};
pub use auth::TokenMap;
pub use backend::{Backend, Call, CallKind, Pins};
pub use gateway::{replayable, Gateway, GatewayConfig, GatewayRequest, GatewayResponse, ANONYMOUS};
pub use policy::{authorize, Capability, Decision, Principal, Role};
pub use ratelimit::{Clock, ManualClock, RateLimit, RateLimiter, SystemClock};
