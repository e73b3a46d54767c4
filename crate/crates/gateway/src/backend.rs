//! Dispatch to the data, model, search and inspection services.
//!
//! Every replayable call is split into `resolve` (which artifact versions
//! the request binds to right now) and `execute` (a pure function of the
//! request and those pins). Replay re-runs `execute` with the pins from the
//! audit record, so it never sees newer artifacts.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use xsys_core::contracts::{
    canonical_serialize, to_canonical_bytes, validate, CompareRequest, ComponentDetail, Contract, InspectionRequest,
    SearchRequest, VersionRef, WhatIfRequest,
};
use xsys_core::inspection::InspectionService;
use xsys_core::model_service::ModelService;
use xsys_core::search::SearchService;
use xsys_core::store::{record_at, ArtifactStore, DataService};
use xsys_core::{Error, Result};

/// Replayable endpoints, named by their audit endpoint template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallKind {
    Search,
    Inspect,
    WhatIf,
    Compare,
    Components,
    Component,
}

impl CallKind {
    pub const ALL: [CallKind; 6] = [
        CallKind::Search,
        CallKind::Inspect,
        CallKind::WhatIf,
        CallKind::Compare,
        CallKind::Components,
        CallKind::Component,
    ];

    pub fn template(self) -> &'static str {
        match self {
            CallKind::Search => "POST /api/search",
            CallKind::Inspect => "POST /api/inspect",
            CallKind::WhatIf => "POST /api/whatif",
            CallKind::Compare => "POST /api/compare",
            CallKind::Components => "GET /api/components/{network_id}",
            CallKind::Component => "GET /api/components/{network_id}/{neuron_id}",
        }
    }

    pub fn from_template(t: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.template() == t)
    }
}

/// Path parameters of the component endpoints, recorded as the request body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentsParams {
    pub network_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentParams {
    pub network_id: String,
    pub neuron_id: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Call {
    Search(SearchRequest),
    Inspect(InspectionRequest),
    WhatIf(WhatIfRequest),
    Compare(CompareRequest),
    Components(ComponentsParams),
    Component(ComponentParams),
}

fn params<T: for<'de> Deserialize<'de>>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::invalid(format!("path parameters: {e}")))
}

impl Call {
    pub fn parse(kind: CallKind, body: &[u8]) -> Result<Call> {
        Ok(match kind {
            CallKind::Search => Call::Search(validate(body)?),
            CallKind::Inspect => Call::Inspect(validate(body)?),
            CallKind::WhatIf => Call::WhatIf(validate(body)?),
            CallKind::Compare => Call::Compare(validate(body)?),
            CallKind::Components => Call::Components(params(body)?),
            CallKind::Component => Call::Component(params(body)?),
        })
    }

    pub fn kind(&self) -> CallKind {
        match self {
            Call::Search(_) => CallKind::Search,
            Call::Inspect(_) => CallKind::Inspect,
            Call::WhatIf(_) => CallKind::WhatIf,
            Call::Compare(_) => CallKind::Compare,
            Call::Components(_) => CallKind::Components,
            Call::Component(_) => CallKind::Component,
        }
    }

    /// Bytes the request digest is computed over.
    pub fn canonical_bytes(&self) -> Result<Vec<u8>> {
        match self {
            Call::Search(r) => canonical_serialize(r),
            Call::Inspect(r) => canonical_serialize(r),
            Call::WhatIf(r) => canonical_serialize(r),
            Call::Compare(r) => canonical_serialize(r),
            Call::Components(p) => to_canonical_bytes(p),
            Call::Component(p) => to_canonical_bytes(p),
        }
    }

    /// Steering calls are hypothesis tests and are never cached.
    pub fn cacheable(&self) -> bool {
        match self {
            Call::WhatIf(_) => false,
            Call::Inspect(r) => !r.has_steering(),
            _ => true,
        }
    }
}

/// Artifact versions a response was computed from.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Pins {
    pub model_version: Option<VersionRef>,
    pub data_version: Option<VersionRef>,
    pub aux_versions: Vec<VersionRef>,
}

impl Pins {
    pub fn all(&self) -> impl Iterator<Item = &VersionRef> {
        self.model_version
            .iter()
            .chain(self.data_version.iter())
            .chain(self.aux_versions.iter())
    }
}

fn pinned<'a>(r: &'a Option<VersionRef>, what: &str) -> Result<&'a VersionRef> {
    r.as_ref().ok_or_else(|| Error::internal(format!("missing {what} pin")))
}

pub struct Backend {
    pub data: Arc<DataService>,
    pub models: Arc<ModelService>,
    pub search: SearchService,
    pub inspection: InspectionService,
}

impl Backend {
    pub fn new(data: Arc<DataService>, epsilon: f64) -> Self {
        let models = Arc::new(ModelService::new(data.clone()));
        Backend {
            search: SearchService::new(data.clone()),
            inspection: InspectionService::with_epsilon(models.clone(), epsilon),
            models,
            data,
        }
    }

    pub fn open(store_root: &Path, epsilon: f64) -> Result<Self> {
        let store = Arc::new(ArtifactStore::open(store_root)?);
        Ok(Self::new(Arc::new(DataService::new(store)), epsilon))
    }

    pub fn store(&self) -> &Arc<ArtifactStore> {
        self.data.store()
    }

    /// Binds a call to the artifact versions it would use now.
    pub fn resolve(&self, call: &Call) -> Result<Pins> {
        match call {
            Call::Search(r) => {
                let emb = self.search.resolve_embeddings(&r.network_id, &r.used_foundation_model)?;
                let ctx = self.search.init_pinned(&emb)?;
                Ok(Pins {
                    model_version: Some(ctx.model.clone()),
                    data_version: Some(emb),
                    aux_versions: vec![ctx.embedder_version.clone()],
                })
            }
            Call::Inspect(InspectionRequest { network_id, .. }) | Call::WhatIf(WhatIfRequest { network_id, .. }) => {
                let model = self.data.resolve_model(network_id)?;
                Ok(Pins {
                    data_version: self.models.training_dataset(&model)?,
                    model_version: Some(model),
                    aux_versions: Vec::new(),
                })
            }
            Call::Compare(r) => {
                let a = self.data.resolve_model(&r.model_a)?;
                let b = self.data.resolve_model(&r.model_b)?;
                let data = match self.models.training_dataset(&a)? {
                    Some(d) => Some(d),
                    None => self.models.training_dataset(&b)?,
                };
                Ok(Pins {
                    model_version: Some(a),
                    data_version: data,
                    aux_versions: vec![b],
                })
            }
            Call::Components(ComponentsParams { network_id }) | Call::Component(ComponentParams { network_id, .. }) => {
                let model = self.data.resolve_model(network_id)?;
                Ok(Pins {
                    data_version: Some(self.data.components_ref(&model)?),
                    model_version: Some(model),
                    aux_versions: Vec::new(),
                })
            }
        }
    }

    /// Canonical response bytes for `call` evaluated against `pins` only.
    pub fn execute(&self, call: &Call, pins: &Pins) -> Result<Vec<u8>> {
        let model = pinned(&pins.model_version, "model")?;
        match call {
            Call::Search(r) => {
                let terms = r
                    .query
                    .as_ref()
                    .filter(|q| !q.is_empty())
                    .ok_or_else(|| Error::invalid("search requires a non-empty `query`"))?;
                let ctx = self.search.init_pinned(pinned(&pins.data_version, "embeddings")?)?;
                if ctx.model != *model || pins.aux_versions.first() != Some(&ctx.embedder_version) {
                    return Err(Error::internal("embeddings provenance differs from pinned versions"));
                }
                let responses = ctx.search(terms)?;
                for (i, resp) in responses.iter().enumerate() {
                    resp.check()
                        .map_err(|e| Error::internal(format!("SearchResponse[{i}]: {e}")))?;
                }
                to_canonical_bytes(&responses)
            }
            Call::Inspect(r) => canonical_serialize(&self.inspection.inspect(model, r)?),
            Call::WhatIf(r) => canonical_serialize(&self.inspection.whatif(model, r)?),
            Call::Compare(r) => {
                let b = pins
                    .aux_versions
                    .first()
                    .ok_or_else(|| Error::internal("missing model_b pin"))?;
                canonical_serialize(&self.inspection.compare(model, b, r)?)
            }
            Call::Components(_) => {
                let bundle = self.data.bundle(pinned(&pins.data_version, "components")?)?;
                if bundle.model != *model {
                    return Err(Error::internal("component bundle belongs to another model"));
                }
                canonical_serialize(&*bundle)
            }
            Call::Component(p) => {
                let bundle = self.data.bundle(pinned(&pins.data_version, "components")?)?;
                canonical_serialize(&ComponentDetail::from_record(record_at(&bundle, p.neuron_id)?))
            }
        }
    }
}
