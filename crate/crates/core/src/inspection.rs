//! Per-prediction relevance, steering experiments, model comparison and
//! component detail panels.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use sha2::{Digest, Sha256};

use crate::contracts::{
    CompareRequest, CompareResponse, ComponentAttribution, ComponentDetail, InspectionRequest,
    InspectionResponse, SampleRef, SteeringModifier, UnitState, VersionRef, WhatIfRequest, WhatIfResponse,
    WhatIfSide,
};
use crate::error::{Error, Result};
use crate::lrp::{inspect_layer_relevance, DEFAULT_EPSILON};
use crate::model_service::ModelService;
use crate::nn::Prediction;
use crate::store::record_at;
use crate::RelevanceTrace;

/// Unsteered forward pass plus relevance for one `(model, input, target)`.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub prediction: Prediction<f64>,
    pub relevance: RelevanceTrace,
}

impl Baseline {
    fn inspect_activations(&self, layer: usize) -> &[f64] {
        &self.prediction.trace.layers[layer]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct BaselineKey {
    model: String,
    input: [u8; 32],
    target: Option<usize>,
}

fn input_digest(input: &[f64]) -> [u8; 32] {
    let mut h = Sha256::new();
    for x in input {
        h.update(x.to_le_bytes());
    }
    h.finalize().into()
}

/// Sorts by |relevance| descending, ties by ascending id.
fn by_abs_relevance<T>(items: &mut [T], key: impl Fn(&T) -> (f64, u64)) {
    items.sort_by(|a, b| {
        let (ra, ia) = key(a);
        let (rb, ib) = key(b);
        rb.abs().total_cmp(&ra.abs()).then(ia.cmp(&ib))
    });
}

pub struct InspectionService {
    models: Arc<ModelService>,
    epsilon: f64,
    baselines: RwLock<HashMap<BaselineKey, Arc<Baseline>>>,
    baseline_hits: AtomicU64,
    baseline_misses: AtomicU64,
}

impl InspectionService {
    pub fn new(models: Arc<ModelService>) -> Self {
        Self::with_epsilon(models, DEFAULT_EPSILON)
    }

    pub fn with_epsilon(models: Arc<ModelService>, epsilon: f64) -> Self {
        InspectionService {
            models,
            epsilon,
            baselines: RwLock::new(HashMap::new()),
            baseline_hits: AtomicU64::new(0),
            baseline_misses: AtomicU64::new(0),
        }
    }

    pub fn models(&self) -> &Arc<ModelService> {
        &self.models
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(hits, misses)` of the what-if baseline cache.
    pub fn baseline_stats(&self) -> (u64, u64) {
        (
            self.baseline_hits.load(Ordering::Relaxed),
            self.baseline_misses.load(Ordering::Relaxed),
        )
    }

    /// Input vector for a sample reference. Ids resolve against the
    /// dataset the model was trained on.
    pub fn resolve_input(&self, model: &VersionRef, sample: &SampleRef) -> Result<Vec<f64>> {
        let loaded = self.models.load(model)?;
        let input = match sample {
            SampleRef::Inline(v) => v.clone(),
            SampleRef::Id(id) => {
                let ds_ref = self
                    .models
                    .training_dataset(model)?
                    .ok_or_else(|| Error::not_found(format!("sample {id}: model {model} has no dataset")))?;
                let ds = self.models.dataset(&ds_ref)?;
                ds.sample(id)
                    .ok_or_else(|| Error::not_found(format!("sample {id}")))?
                    .features
                    .clone()
            }
        };
        if input.len() != loaded.network.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, model expects {}",
                input.len(),
                loaded.network.input_dim()
            )));
        }
        Ok(input)
    }

    /// Relevance at the inspect layer; `target` defaults to the predicted class.
    pub fn attribute(&self, model: &VersionRef, input: &[f64], target: Option<usize>) -> Result<RelevanceTrace> {
        Ok(self.compute_baseline(model, input, target)?.relevance)
    }

    fn compute_baseline(&self, model: &VersionRef, input: &[f64], target: Option<usize>) -> Result<Baseline> {
        let prediction = self.models.predict(model, input, None)?;
        self.relevance_for(model, input, prediction, target)
    }

    fn relevance_for(
        &self,
        model: &VersionRef,
        input: &[f64],
        prediction: Prediction<f64>,
        target: Option<usize>,
    ) -> Result<Baseline> {
        let loaded = self.models.load(model)?;
        let target = target.unwrap_or(prediction.predicted_class);
        let relevance = inspect_layer_relevance(&loaded.network, input, &prediction.trace, target, self.epsilon)?;
        Ok(Baseline { prediction, relevance })
    }

    /// Cached unsteered baseline.
    pub fn baseline(&self, model: &VersionRef, input: &[f64], target: Option<usize>) -> Result<Arc<Baseline>> {
        let key = BaselineKey {
            model: model.version.clone(),
            input: input_digest(input),
            target,
        };
        if let Some(b) = self.baselines.read().get(&key) {
            self.baseline_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(b.clone());
        }
        self.baseline_misses.fetch_add(1, Ordering::Relaxed);
        let b = Arc::new(self.compute_baseline(model, input, target)?);
        self.baselines.write().insert(key, b.clone());
        Ok(b)
    }

    pub fn inspect(&self, model: &VersionRef, request: &InspectionRequest) -> Result<InspectionResponse> {
        let input = self.resolve_input(model, &request.sample_id)?;
        self.inspect_input(model, &input, request.steering.as_deref(), request.target_class)
    }

    pub fn inspect_input(
        &self,
        model: &VersionRef,
        input: &[f64],
        steering: Option<&[SteeringModifier]>,
        target: Option<usize>,
    ) -> Result<InspectionResponse> {
        let loaded = self.models.load(model)?;
        let layer = loaded.network.inspect_layer();
        let before = self.compute_baseline(model, input, target)?;
        let after = match steering.filter(|s| !s.is_empty()) {
            Some(s) => self.models.predict(model, input, Some(s))?,
            None => before.prediction.clone(),
        };
        let act_before = before.inspect_activations(layer);
        let act_after = &after.trace.layers[layer];
        let mut components: Vec<ComponentAttribution> = before
            .relevance
            .result()
            .iter()
            .enumerate()
            .map(|(i, r)| ComponentAttribution {
                neuron_id: i as u64,
                relevance: *r,
                activation_before: act_before[i],
                activation_after: act_after[i],
            })
            .collect();
        by_abs_relevance(&mut components, |c| (c.relevance, c.neuron_id));
        Ok(InspectionResponse {
            logits_before: before.prediction.logits.clone(),
            logits_after: after.logits,
            predicted_before: before.prediction.predicted_class,
            predicted_after: after.predicted_class,
            components,
        })
    }

    /// Baseline from cache, steered pass recomputed. Both sides attribute the
    /// same target class so their relevances are comparable.
    pub fn whatif(&self, model: &VersionRef, request: &WhatIfRequest) -> Result<WhatIfResponse> {
        if request.steering.is_empty() {
            return Err(Error::invalid("what-if requires at least one steering modifier"));
        }
        let input = self.resolve_input(model, &request.sample_id)?;
        let loaded = self.models.load(model)?;
        let layer = loaded.network.inspect_layer();
        let base = self.baseline(model, &input, request.target_class)?;
        let target = base.relevance.target_class;
        let steered = self.models.predict(model, &input, Some(&request.steering))?;
        let after = self.relevance_for(model, &input, steered, Some(target))?;

        let side = |b: &Baseline| {
            let acts = b.inspect_activations(layer);
            let mut components: Vec<UnitState> = b
                .relevance
                .result()
                .iter()
                .enumerate()
                .map(|(i, r)| UnitState {
                    neuron_id: i as u64,
                    relevance: *r,
                    activation: acts[i],
                })
                .collect();
            by_abs_relevance(&mut components, |c| (c.relevance, c.neuron_id));
            WhatIfSide {
                logits: b.prediction.logits.clone(),
                predicted_class: b.prediction.predicted_class,
                components,
            }
        };
        let before = side(&base);
        let after = side(&after);
        let delta_logits = after.logits.iter().zip(&before.logits).map(|(a, b)| a - b).collect();
        Ok(WhatIfResponse {
            before,
            after,
            delta_logits,
        })
    }

    /// Inspects the same input under two pinned model versions.
    pub fn compare(&self, model_a: &VersionRef, model_b: &VersionRef, request: &CompareRequest) -> Result<CompareResponse> {
        let input = match self.resolve_input(model_a, &request.sample_id) {
            Err(e) if e.code() == crate::ErrorCode::NotFound => self.resolve_input(model_b, &request.sample_id)?,
            r => r?,
        };
        let a = self.inspect_input(model_a, &input, None, request.target_class)?;
        let b = self.inspect_input(model_b, &input, None, request.target_class)?;
        if a.logits_before.len() != b.logits_before.len() {
            return Err(Error::invalid("compared models have different numbers of classes"));
        }
        let delta_logits = b.logits_before.iter().zip(&a.logits_before).map(|(x, y)| x - y).collect();
        Ok(CompareResponse {
            model_a: model_a.clone(),
            model_b: model_b.clone(),
            a,
            b,
            delta_logits,
        })
    }

    /// Projection of the published component record; nothing is recomputed.
    pub fn component_details(&self, network_id: &str, neuron_id: u64) -> Result<ComponentDetail> {
        let data = self.models.data();
        let model = data.resolve_model(network_id)?;
        let bundle = data.bundle(&data.components_ref(&model)?)?;
        Ok(ComponentDetail::from_record(record_at(&bundle, neuron_id)?))
    }
}
