use std::collections::{BTreeMap, BTreeSet};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{Contract, SchemaTag};
use crate::digest::is_digest_hex;
use crate::error::ErrorCode;

type Check = std::result::Result<(), String>;

fn finite(path: &str, v: f64) -> Check {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("`{path}` must be finite"))
    }
}

fn all_finite(path: &str, vs: &[f64]) -> Check {
    for (i, v) in vs.iter().enumerate() {
        finite(&format!("{path}[{i}]"), *v)?;
    }
    Ok(())
}

fn non_empty(path: &str, s: &str) -> Check {
    if s.is_empty() {
        Err(format!("`{path}` must be non-empty"))
    } else {
        Ok(())
    }
}

fn in_cosine_range(path: &str, v: f64) -> Check {
    finite(path, v)?;
    if (-1.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(format!("`{path}` = {v} outside [-1, 1]"))
    }
}

// ---------------------------------------------------------------------------
// Semantic search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SearchRequest {
    #[serde(default)]
    pub query: Option<Vec<String>>,
    pub network_id: String,
    pub used_foundation_model: String,
}

impl Contract for SearchRequest {
    const TAG: SchemaTag = SchemaTag::SearchRequest;

    fn check(&self) -> Check {
        if let Some(terms) = &self.query {
            if terms.is_empty() {
                return Err("`query` must be non-empty when present".into());
            }
            for (i, t) in terms.iter().enumerate() {
                if t.trim().is_empty() {
                    return Err(format!("`query[{i}]` must be a non-empty string"));
                }
            }
        }
        non_empty("network_id", &self.network_id)?;
        non_empty("used_foundation_model", &self.used_foundation_model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct NeuronAlignment {
    pub neuron_id: u64,
    pub alignment_score: f64,
}

impl Contract for NeuronAlignment {
    const TAG: SchemaTag = SchemaTag::NeuronAlignment;

    fn check(&self) -> Check {
        in_cosine_range("alignment_score", self.alignment_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SearchResponse {
    pub query: String,
    pub neurons: Vec<NeuronAlignment>,
    pub max_alignment: f64,
    pub min_alignment: f64,
}

impl Contract for SearchResponse {
    const TAG: SchemaTag = SchemaTag::SearchResponse;

    fn check(&self) -> Check {
        non_empty("query", &self.query)?;
        if self.neurons.is_empty() {
            return Err("`neurons` must be non-empty".into());
        }
        let mut seen = BTreeSet::new();
        for (i, n) in self.neurons.iter().enumerate() {
            in_cosine_range(&format!("neurons[{i}].alignment_score"), n.alignment_score)?;
            if !seen.insert(n.neuron_id) {
                return Err(format!("`neurons[{i}].neuron_id` {} repeated", n.neuron_id));
            }
        }
        for (i, w) in self.neurons.windows(2).enumerate() {
            let ordered = w[0].alignment_score > w[1].alignment_score
                || (w[0].alignment_score == w[1].alignment_score && w[0].neuron_id < w[1].neuron_id);
            if !ordered {
                return Err(format!("`neurons[{}]` out of order", i + 1));
            }
        }
        let max = self.neurons[0].alignment_score;
        let min = self.neurons[self.neurons.len() - 1].alignment_score;
        if self.max_alignment != max {
            return Err(format!("`max_alignment` {} != {max}", self.max_alignment));
        }
        if self.min_alignment != min {
            return Err(format!("`min_alignment` {} != {min}", self.min_alignment));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Errors and versions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ErrorEnvelope {
    pub code: ErrorCode,
    pub message: String,
    pub trace_id: String,
}

impl Contract for ErrorEnvelope {
    const TAG: SchemaTag = SchemaTag::ErrorEnvelope;

    fn check(&self) -> Check {
        non_empty("trace_id", &self.trace_id)
    }
}

/// Content-addressed reference: `version` is the SHA-256 of the artifact bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct VersionRef {
    pub namespace: String,
    pub key: String,
    pub version: String,
}

impl VersionRef {
    pub fn new(namespace: impl Into<String>, key: impl Into<String>, version: impl Into<String>) -> Self {
        VersionRef {
            namespace: namespace.into(),
            key: key.into(),
            version: version.into(),
        }
    }

    /// First 12 hex characters, for display and derived keys.
    pub fn short(&self) -> &str {
        &self.version[..self.version.len().min(12)]
    }
}

impl std::fmt::Display for VersionRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}@{}", self.namespace, self.key, self.short())
    }
}

impl Contract for VersionRef {
    const TAG: SchemaTag = SchemaTag::VersionRef;

    fn check(&self) -> Check {
        non_empty("namespace", &self.namespace)?;
        non_empty("key", &self.key)?;
        if !is_digest_hex(&self.version) {
            return Err("`version` must be a 64-character lowercase hex digest".into());
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Inspection, what-if, compare
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SteeringModifier {
    pub layer: usize,
    pub unit: usize,
    pub m: f64,
}

fn check_steering(path: &str, mods: &[SteeringModifier]) -> Check {
    let mut seen = BTreeSet::new();
    for (i, s) in mods.iter().enumerate() {
        finite(&format!("{path}[{i}].m"), s.m)?;
        if !(-1.0..=1.0).contains(&s.m) {
            return Err(format!("`{path}[{i}].m` = {} outside [-1, 1]", s.m));
        }
        if !seen.insert((s.layer, s.unit)) {
            return Err(format!("`{path}[{i}]` repeats (layer {}, unit {})", s.layer, s.unit));
        }
    }
    Ok(())
}

/// A dataset sample id, or an inline input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(untagged)]
pub enum SampleRef {
    Id(String),
    Inline(Vec<f64>),
}

impl SampleRef {
    fn check(&self, path: &str) -> Check {
        match self {
            SampleRef::Id(id) => non_empty(path, id),
            SampleRef::Inline(v) if v.is_empty() => Err(format!("`{path}` must be non-empty")),
            SampleRef::Inline(v) => all_finite(path, v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InspectionRequest {
    pub network_id: String,
    pub sample_id: SampleRef,
    #[serde(default)]
    pub steering: Option<Vec<SteeringModifier>>,
    #[serde(default)]
    pub target_class: Option<usize>,
}

impl InspectionRequest {
    pub fn has_steering(&self) -> bool {
        self.steering.as_ref().is_some_and(|s| !s.is_empty())
    }
}

impl Contract for InspectionRequest {
    const TAG: SchemaTag = SchemaTag::InspectionRequest;

    fn check(&self) -> Check {
        non_empty("network_id", &self.network_id)?;
        self.sample_id.check("sample_id")?;
        if let Some(s) = &self.steering {
            check_steering("steering", s)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComponentAttribution {
    pub neuron_id: u64,
    pub relevance: f64,
    pub activation_before: f64,
    pub activation_after: f64,
}

fn check_relevance_order<'a>(
    path: &str,
    items: impl Iterator<Item = (u64, f64)> + Clone + 'a,
) -> Check {
    let v: Vec<(u64, f64)> = items.collect();
    for (i, (_, r)) in v.iter().enumerate() {
        finite(&format!("{path}[{i}].relevance"), *r)?;
    }
    for (i, w) in v.windows(2).enumerate() {
        let (a, b) = (w[0].1.abs(), w[1].1.abs());
        if !(a > b || (a == b && w[0].0 < w[1].0)) {
            return Err(format!("`{path}[{}]` out of |relevance| order", i + 1));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct InspectionResponse {
    pub logits_before: Vec<f64>,
    pub logits_after: Vec<f64>,
    pub predicted_before: usize,
    pub predicted_after: usize,
    pub components: Vec<ComponentAttribution>,
}

impl Contract for InspectionResponse {
    const TAG: SchemaTag = SchemaTag::InspectionResponse;

    fn check(&self) -> Check {
        all_finite("logits_before", &self.logits_before)?;
        all_finite("logits_after", &self.logits_after)?;
        if self.logits_before.len() != self.logits_after.len() {
            return Err("`logits_after` length differs from `logits_before`".into());
        }
        if self.predicted_before >= self.logits_before.len()
            || self.predicted_after >= self.logits_after.len()
        {
            return Err("predicted class out of range".into());
        }
        check_relevance_order(
            "components",
            self.components.iter().map(|c| (c.neuron_id, c.relevance)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub network_id: String,
    pub sample_id: SampleRef,
    pub steering: Vec<SteeringModifier>,
    #[serde(default)]
    pub target_class: Option<usize>,
}

impl Contract for WhatIfRequest {
    const TAG: SchemaTag = SchemaTag::WhatIfRequest;

    fn check(&self) -> Check {
        non_empty("network_id", &self.network_id)?;
        self.sample_id.check("sample_id")?;
        if self.steering.is_empty() {
            return Err("`steering` must be non-empty".into());
        }
        check_steering("steering", &self.steering)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct UnitState {
    pub neuron_id: u64,
    pub relevance: f64,
    pub activation: f64,
}

/// One side of a what-if experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WhatIfSide {
    pub logits: Vec<f64>,
    pub predicted_class: usize,
    pub components: Vec<UnitState>,
}

impl WhatIfSide {
    fn check(&self, path: &str) -> Check {
        all_finite(&format!("{path}.logits"), &self.logits)?;
        if self.predicted_class >= self.logits.len() {
            return Err(format!("`{path}.predicted_class` out of range"));
        }
        check_relevance_order(
            &format!("{path}.components"),
            self.components.iter().map(|c| (c.neuron_id, c.relevance)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct WhatIfResponse {
    pub before: WhatIfSide,
    pub after: WhatIfSide,
    pub delta_logits: Vec<f64>,
}

impl Contract for WhatIfResponse {
    const TAG: SchemaTag = SchemaTag::WhatIfResponse;

    fn check(&self) -> Check {
        self.before.check("before")?;
        self.after.check("after")?;
        all_finite("delta_logits", &self.delta_logits)?;
        if self.delta_logits.len() != self.before.logits.len() {
            return Err("`delta_logits` length mismatch".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CompareRequest {
    pub model_a: String,
    pub model_b: String,
    pub sample_id: SampleRef,
    #[serde(default)]
    pub target_class: Option<usize>,
}

impl Contract for CompareRequest {
    const TAG: SchemaTag = SchemaTag::CompareRequest;

    fn check(&self) -> Check {
        non_empty("model_a", &self.model_a)?;
        non_empty("model_b", &self.model_b)?;
        self.sample_id.check("sample_id")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CompareResponse {
    pub model_a: VersionRef,
    pub model_b: VersionRef,
    pub a: InspectionResponse,
    pub b: InspectionResponse,
    /// Per-class `b - a` logit deltas.
    pub delta_logits: Vec<f64>,
}

impl Contract for CompareResponse {
    const TAG: SchemaTag = SchemaTag::CompareResponse;

    fn check(&self) -> Check {
        self.model_a.check().map_err(|e| format!("model_a: {e}"))?;
        self.model_b.check().map_err(|e| format!("model_b: {e}"))?;
        self.a.check().map_err(|e| format!("a: {e}"))?;
        self.b.check().map_err(|e| format!("b: {e}"))?;
        all_finite("delta_logits", &self.delta_logits)
    }
}

// ---------------------------------------------------------------------------
// Models
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LayerSpec {
    /// `weights` is row-major `[out][in]`.
    Dense { weights: Vec<Vec<f64>>, bias: Vec<f64> },
    Relu,
}

impl LayerSpec {
    pub fn is_relu(&self) -> bool {
        matches!(self, LayerSpec::Relu)
    }
}

/// Serialized feedforward network with a designated inspect layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub input_dim: usize,
    pub class_names: Vec<String>,
    pub layers: Vec<LayerSpec>,
    pub inspect_layer: usize,
    #[serde(default)]
    pub provenance_note: String,
    #[serde(default)]
    pub metrics: BTreeMap<String, f64>,
}

/// Names are store keys: restricted to a filesystem and URL safe alphabet.
pub fn is_valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && name
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'))
}

impl ModelSpec {
    /// Output width of each layer.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut width = self.input_dim;
        self.layers
            .iter()
            .map(|l| {
                if let LayerSpec::Dense { bias, .. } = l {
                    width = bias.len();
                }
                width
            })
            .collect()
    }

    pub fn n_components(&self) -> usize {
        self.layer_widths().get(self.inspect_layer).copied().unwrap_or(0)
    }
}

impl Contract for ModelSpec {
    const TAG: SchemaTag = SchemaTag::ModelSpec;

    fn check(&self) -> Check {
        if !is_valid_name(&self.name) {
            return Err("`name` must match [A-Za-z0-9_.-]{1,128}".into());
        }
        if self.input_dim == 0 {
            return Err("`input_dim` must be positive".into());
        }
        if self.class_names.is_empty() {
            return Err("`class_names` must be non-empty".into());
        }
        if self.layers.is_empty() {
            return Err("`layers` must be non-empty".into());
        }
        let mut width = self.input_dim;
        for (li, layer) in self.layers.iter().enumerate() {
            if let LayerSpec::Dense { weights, bias } = layer {
                if weights.len() != bias.len() || bias.is_empty() {
                    return Err(format!(
                        "`layers[{li}]` has {} weight rows and {} biases",
                        weights.len(),
                        bias.len()
                    ));
                }
                for (r, row) in weights.iter().enumerate() {
                    if row.len() != width {
                        return Err(format!(
                            "`layers[{li}].weights[{r}]` has {} columns, expected {width}",
                            row.len()
                        ));
                    }
                    all_finite(&format!("layers[{li}].weights[{r}]"), row)?;
                }
                all_finite(&format!("layers[{li}].bias"), bias)?;
                width = bias.len();
            }
        }
        if width != self.class_names.len() {
            return Err(format!(
                "final output width {width} != {} class names",
                self.class_names.len()
            ));
        }
        match self.layers.get(self.inspect_layer) {
            Some(LayerSpec::Relu) => {}
            Some(_) => return Err("`inspect_layer` must index a relu layer".into()),
            None => return Err("`inspect_layer` out of range".into()),
        }
        for (k, v) in &self.metrics {
            finite(&format!("metrics.{k}"), *v)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ModelMetadata {
    pub name: String,
    pub version: VersionRef,
    pub input_dim: usize,
    pub class_names: Vec<String>,
    pub provenance_note: String,
    pub metrics: BTreeMap<String, f64>,
    pub n_components: usize,
}

impl Contract for ModelMetadata {
    const TAG: SchemaTag = SchemaTag::ModelMetadata;

    fn check(&self) -> Check {
        self.version.check()
    }
}

// ---------------------------------------------------------------------------
// Component records and detail panels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AlignmentLabel {
    pub word: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ClassRelevance {
    pub class_index: usize,
    pub mean_relevance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ActivationStats {
    pub max: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct TopSample {
    pub sample_id: String,
    pub activation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub network_id: String,
    pub neuron_id: u64,
    pub embedding: Vec<f64>,
    pub layout_xy: [f64; 2],
    pub top_sample_ids: Vec<String>,
    pub top_sample_activations: Vec<f64>,
    pub activation_stats: ActivationStats,
    pub alignment_labels: Vec<AlignmentLabel>,
    pub relevant_classes: Vec<ClassRelevance>,
    pub quality: f64,
    /// Set when the unit never activated on the reference split; its embedding is zero.
    pub degenerate: bool,
}

fn check_labels(path: &str, labels: &[AlignmentLabel]) -> Check {
    for (i, l) in labels.iter().enumerate() {
        in_cosine_range(&format!("{path}[{i}].score"), l.score)?;
    }
    for (i, w) in labels.windows(2).enumerate() {
        if w[0].score < w[1].score {
            return Err(format!("`{path}[{}]` out of score order", i + 1));
        }
    }
    Ok(())
}

fn check_quality(q: f64) -> Check {
    finite("quality", q)?;
    if (0.0..=1.0).contains(&q) {
        Ok(())
    } else {
        Err(format!("`quality` = {q} outside [0, 1]"))
    }
}

impl Contract for ComponentRecord {
    const TAG: SchemaTag = SchemaTag::ComponentRecord;

    fn check(&self) -> Check {
        non_empty("network_id", &self.network_id)?;
        all_finite("embedding", &self.embedding)?;
        all_finite("layout_xy", &self.layout_xy)?;
        if self.top_sample_ids.len() != self.top_sample_activations.len() {
            return Err("`top_sample_activations` length differs from `top_sample_ids`".into());
        }
        for (i, w) in self.top_sample_activations.windows(2).enumerate() {
            if w[0] < w[1] {
                return Err(format!("`top_sample_activations[{}]` out of order", i + 1));
            }
        }
        check_labels("alignment_labels", &self.alignment_labels)?;
        check_quality(self.quality)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComponentDetail {
    pub neuron_id: u64,
    pub top_samples: Vec<TopSample>,
    pub alignment_labels: Vec<AlignmentLabel>,
    pub relevant_classes: Vec<ClassRelevance>,
    pub quality: f64,
    pub degenerate: bool,
}

impl ComponentDetail {
    pub fn from_record(record: &ComponentRecord) -> Self {
        ComponentDetail {
            neuron_id: record.neuron_id,
            top_samples: record
                .top_sample_ids
                .iter()
                .zip(&record.top_sample_activations)
                .map(|(id, a)| TopSample {
                    sample_id: id.clone(),
                    activation: *a,
                })
                .collect(),
            alignment_labels: record.alignment_labels.clone(),
            relevant_classes: record.relevant_classes.clone(),
            quality: record.quality,
            degenerate: record.degenerate,
        }
    }
}

impl Contract for ComponentDetail {
    const TAG: SchemaTag = SchemaTag::ComponentDetail;

    fn check(&self) -> Check {
        for (i, w) in self.top_samples.windows(2).enumerate() {
            if w[0].activation < w[1].activation {
                return Err(format!("`top_samples[{}]` out of activation order", i + 1));
            }
        }
        check_labels("alignment_labels", &self.alignment_labels)?;
        check_quality(self.quality)
    }
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ReplayReport {
    pub audit_id: u64,
    #[serde(rename = "match")]
    pub matched: bool,
    pub original_digest: String,
    pub replayed_digest: String,
}

impl Contract for ReplayReport {
    const TAG: SchemaTag = SchemaTag::ReplayReport;

    fn check(&self) -> Check {
        if !is_digest_hex(&self.original_digest) || !is_digest_hex(&self.replayed_digest) {
            return Err("digests must be 64-character lowercase hex".into());
        }
        Ok(())
    }
}

/// Name of the stand-in quality metric carried by every component bundle.
pub const QUALITY_METRIC: &str = "mean_pairwise_cosine_topk (stand-in)";

/// Stored form of all component records for one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ComponentBundle {
    pub network_id: String,
    pub model: VersionRef,
    pub k: usize,
    pub quality_metric: String,
    /// Ordered by `neuron_id`, which equals the position in the list.
    pub records: Vec<ComponentRecord>,
}

impl Contract for ComponentBundle {
    const TAG: SchemaTag = SchemaTag::ComponentBundle;

    fn check(&self) -> Check {
        self.model.check().map_err(|e| format!("model: {e}"))?;
        let dim = self.records.first().map(|r| r.embedding.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.neuron_id != i as u64 {
                return Err(format!("`records[{i}].neuron_id` is {}", r.neuron_id));
            }
            if Some(r.embedding.len()) != dim {
                return Err(format!("`records[{i}].embedding` dimension differs"));
            }
            if r.network_id != self.network_id {
                return Err(format!("`records[{i}].network_id` differs from bundle"));
            }
            r.check().map_err(|e| format!("records[{i}]: {e}"))?;
        }
        Ok(())
    }
}
