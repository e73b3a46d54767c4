//! Published JSON Schema documents, addressed as `<Name>@<version>.json`.

use serde_json::Value;

use super::{dto::*, to_canonical_bytes, SchemaTag};
use crate::digest::sha256_hex;

pub fn schema_document(tag: SchemaTag) -> Value {
    let schema = match tag {
        SchemaTag::SearchRequest => schemars::schema_for!(SearchRequest),
        SchemaTag::NeuronAlignment => schemars::schema_for!(NeuronAlignment),
        SchemaTag::SearchResponse => schemars::schema_for!(SearchResponse),
        SchemaTag::ErrorEnvelope => schemars::schema_for!(ErrorEnvelope),
        SchemaTag::VersionRef => schemars::schema_for!(VersionRef),
        SchemaTag::InspectionRequest => schemars::schema_for!(InspectionRequest),
        SchemaTag::InspectionResponse => schemars::schema_for!(InspectionResponse),
        SchemaTag::WhatIfRequest => schemars::schema_for!(WhatIfRequest),
        SchemaTag::WhatIfResponse => schemars::schema_for!(WhatIfResponse),
        SchemaTag::CompareRequest => schemars::schema_for!(CompareRequest),
        SchemaTag::CompareResponse => schemars::schema_for!(CompareResponse),
        SchemaTag::ModelSpec => schemars::schema_for!(ModelSpec),
        SchemaTag::ModelMetadata => schemars::schema_for!(ModelMetadata),
        SchemaTag::ComponentRecord => schemars::schema_for!(ComponentRecord),
        SchemaTag::ComponentDetail => schemars::schema_for!(ComponentDetail),
        SchemaTag::ReplayReport => schemars::schema_for!(ReplayReport),
        SchemaTag::ComponentBundle => schemars::schema_for!(ComponentBundle),
    };
    schema.to_value()
}

/// Content hash of the canonical schema document.
pub fn schema_version(tag: SchemaTag) -> String {
    let bytes = to_canonical_bytes(&schema_document(tag)).expect("schema documents are finite JSON");
    sha256_hex(&bytes)
}

pub fn schema_file_name(tag: SchemaTag) -> String {
    format!("{}@{}.json", tag.name(), schema_version(tag))
}

/// Resolves `<Name>@<version>.json`; the version must match the current document.
pub fn lookup_schema_file(file: &str) -> Option<(SchemaTag, Value)> {
    let stem = file.strip_suffix(".json")?;
    let (name, version) = stem.split_once('@')?;
    let tag = SchemaTag::from_name(name)?;
    (schema_version(tag) == version).then(|| (tag, schema_document(tag)))
}
