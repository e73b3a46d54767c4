//! Wire-level data transfer objects shared by every service.
//!
//! All DTOs are closed (unknown fields are rejected), serialize to
//! canonical JSON via [`canonical_serialize`], and are checked against
//! their invariants by [`validate`] before any service sees them.

pub mod canonical;
mod dto;
pub mod schema;

pub use canonical::{format_f64, to_canonical_bytes, value_to_canonical_bytes};
pub use dto::*;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, ErrorCode, Result};

/// Schema tags for the closed set of wire types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemaTag {
    SearchRequest,
    NeuronAlignment,
    SearchResponse,
    ErrorEnvelope,
    VersionRef,
    InspectionRequest,
    InspectionResponse,
    WhatIfRequest,
    WhatIfResponse,
    CompareRequest,
    CompareResponse,
    ModelSpec,
    ModelMetadata,
    ComponentRecord,
    ComponentDetail,
    ReplayReport,
    ComponentBundle,
}

impl SchemaTag {
    pub const ALL: [SchemaTag; 17] = [
        SchemaTag::SearchRequest,
        SchemaTag::NeuronAlignment,
        SchemaTag::SearchResponse,
        SchemaTag::ErrorEnvelope,
        SchemaTag::VersionRef,
        SchemaTag::InspectionRequest,
        SchemaTag::InspectionResponse,
        SchemaTag::WhatIfRequest,
        SchemaTag::WhatIfResponse,
        SchemaTag::CompareRequest,
        SchemaTag::CompareResponse,
        SchemaTag::ModelSpec,
        SchemaTag::ModelMetadata,
        SchemaTag::ComponentRecord,
        SchemaTag::ComponentDetail,
        SchemaTag::ReplayReport,
        SchemaTag::ComponentBundle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemaTag::SearchRequest => "SearchRequest",
            SchemaTag::NeuronAlignment => "NeuronAlignment",
            SchemaTag::SearchResponse => "SearchResponse",
            SchemaTag::ErrorEnvelope => "ErrorEnvelope",
            SchemaTag::VersionRef => "VersionRef",
            SchemaTag::InspectionRequest => "InspectionRequest",
            SchemaTag::InspectionResponse => "InspectionResponse",
            SchemaTag::WhatIfRequest => "WhatIfRequest",
            SchemaTag::WhatIfResponse => "WhatIfResponse",
            SchemaTag::CompareRequest => "CompareRequest",
            SchemaTag::CompareResponse => "CompareResponse",
            SchemaTag::ModelSpec => "ModelSpec",
            SchemaTag::ModelMetadata => "ModelMetadata",
            SchemaTag::ComponentRecord => "ComponentRecord",
            SchemaTag::ComponentDetail => "ComponentDetail",
            SchemaTag::ReplayReport => "ReplayReport",
            SchemaTag::ComponentBundle => "ComponentBundle",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }
}

/// A wire type with invariants beyond its serde shape.
pub trait Contract: Serialize + DeserializeOwned {
    const TAG: SchemaTag;

    /// Checks type invariants; the error names the offending field path.
    fn check(&self) -> std::result::Result<(), String>;
}

/// Deterministic bytes for a DTO. Fails if the DTO violates its invariants.
pub fn canonical_serialize<T: Contract>(dto: &T) -> Result<Vec<u8>> {
    dto.check()
        .map_err(|e| Error::invalid(format!("{}: {e}", T::TAG.name())))?;
    to_canonical_bytes(dto)
}

/// Parses and checks bytes as `T`.
///
/// Missing required fields, unknown fields, type mismatches and invariant
/// violations all produce `INVALID_REQUEST` with the field path in the message.
pub fn validate<T: Contract>(bytes: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let dto: T = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::invalid(format!("{} at `{}`: {}", T::TAG.name(), path, e.into_inner()))
    })?;
    dto.check()
        .map_err(|e| Error::invalid(format!("{}: {e}", T::TAG.name())))?;
    Ok(dto)
}

/// Any wire DTO, for callers that dispatch on a runtime schema tag.
#[derive(Debug, Clone, PartialEq)]
pub enum Dto {
    SearchRequest(SearchRequest),
    NeuronAlignment(NeuronAlignment),
    SearchResponse(SearchResponse),
    ErrorEnvelope(ErrorEnvelope),
    VersionRef(VersionRef),
    InspectionRequest(InspectionRequest),
    InspectionResponse(InspectionResponse),
    WhatIfRequest(WhatIfRequest),
    WhatIfResponse(WhatIfResponse),
    CompareRequest(CompareRequest),
    CompareResponse(CompareResponse),
    ModelSpec(ModelSpec),
    ModelMetadata(ModelMetadata),
    ComponentRecord(ComponentRecord),
    ComponentDetail(ComponentDetail),
    ReplayReport(ReplayReport),
    ComponentBundle(ComponentBundle),
}

pub fn validate_tagged(bytes: &[u8], tag: SchemaTag) -> Result<Dto> {
    Ok(match tag {
        SchemaTag::SearchRequest => Dto::SearchRequest(validate(bytes)?),
        SchemaTag::NeuronAlignment => Dto::NeuronAlignment(validate(bytes)?),
        SchemaTag::SearchResponse => Dto::SearchResponse(validate(bytes)?),
        SchemaTag::ErrorEnvelope => Dto::ErrorEnvelope(validate(bytes)?),
        SchemaTag::VersionRef => Dto::VersionRef(validate(bytes)?),
        SchemaTag::InspectionRequest => Dto::InspectionRequest(validate(bytes)?),
        SchemaTag::InspectionResponse => Dto::InspectionResponse(validate(bytes)?),
        SchemaTag::WhatIfRequest => Dto::WhatIfRequest(validate(bytes)?),
        SchemaTag::WhatIfResponse => Dto::WhatIfResponse(validate(bytes)?),
        SchemaTag::CompareRequest => Dto::CompareRequest(validate(bytes)?),
        SchemaTag::CompareResponse => Dto::CompareResponse(validate(bytes)?),
        SchemaTag::ModelSpec => Dto::ModelSpec(validate(bytes)?),
        SchemaTag::ModelMetadata => Dto::ModelMetadata(validate(bytes)?),
        SchemaTag::ComponentRecord => Dto::ComponentRecord(validate(bytes)?),
        SchemaTag::ComponentDetail => Dto::ComponentDetail(validate(bytes)?),
        SchemaTag::ReplayReport => Dto::ReplayReport(validate(bytes)?),
        SchemaTag::ComponentBundle => Dto::ComponentBundle(validate(bytes)?),
    })
}

impl ErrorEnvelope {
    pub fn from_error(err: &Error, trace_id: impl Into<String>) -> Self {
        ErrorEnvelope {
            code: err.code(),
            message: err.to_string(),
            trace_id: trace_id.into(),
        }
    }

    pub fn new(code: ErrorCode, message: impl Into<String>, trace_id: impl Into<String>) -> Self {
        ErrorEnvelope {
            code,
            message: message.into(),
            trace_id: trace_id.into(),
        }
    }
}
