//! Data services: the artifact store plus indexed component-record access.

mod artifact;

pub use artifact::{
    escape_key, now_nanos, Artifact, ArtifactStore, FetchCounter, Producer, Provenance, ProvenanceRecord,
    StoreManifest, JSON_MEDIA_TYPE,
};

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;

use crate::contracts::{validate, ComponentBundle, ComponentRecord, VersionRef};
use crate::digest::is_digest_hex;
use crate::error::{Error, Result};

/// Well-known namespaces and key builders.
pub mod names {
    use crate::contracts::VersionRef;

    pub const MODELS: &str = "models";
    pub const DATASETS: &str = "datasets";
    pub const EMBEDDERS: &str = "embedders";
    pub const ACTIVATIONS: &str = "activations";
    pub const EMBEDDINGS: &str = "embeddings";
    pub const LAYOUTS: &str = "layouts";
    pub const COMPONENTS: &str = "components";
    pub const MANIFESTS: &str = "manifests";

    pub fn activations_key(model: &VersionRef, dataset: &VersionRef, layer: usize) -> String {
        format!("{}.{}.L{layer}", model.version, dataset.version)
    }

    pub fn embeddings_key(model: &VersionRef, embedder_id: &str) -> String {
        format!("{}.{embedder_id}", model.version)
    }

    pub fn layout_key(model: &VersionRef) -> String {
        model.version.clone()
    }

    pub fn components_key(model: &VersionRef) -> String {
        model.version.clone()
    }
}

/// A network id is a model name, optionally pinned as `name@<sha256>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkId<'a> {
    pub name: &'a str,
    pub version: Option<&'a str>,
}

impl<'a> NetworkId<'a> {
    pub fn parse(s: &'a str) -> Result<Self> {
        let (name, version) = match s.split_once('@') {
            Some((n, v)) => (n, Some(v)),
            None => (s, None),
        };
        if !crate::contracts::is_valid_name(name) {
            return Err(Error::invalid(format!("malformed network id `{s}`")));
        }
        if let Some(v) = version {
            if !is_digest_hex(v) {
                return Err(Error::invalid(format!("malformed version in network id `{s}`")));
            }
        }
        Ok(NetworkId { name, version })
    }
}

pub fn network_id_of(model: &VersionRef) -> String {
    format!("{}@{}", model.key, model.version)
}

pub struct DataService {
    store: Arc<ArtifactStore>,
    bundles: RwLock<HashMap<String, Arc<ComponentBundle>>>,
}

impl DataService {
    pub fn new(store: Arc<ArtifactStore>) -> Self {
        DataService {
            store,
            bundles: RwLock::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<ArtifactStore> {
        &self.store
    }

    /// Resolves a network id to a registered model version (latest if unpinned).
    pub fn resolve_model(&self, network_id: &str) -> Result<VersionRef> {
        let id = NetworkId::parse(network_id)?;
        match id.version {
            Some(v) => {
                let r = VersionRef::new(names::MODELS, id.name, v);
                if self.store.contains(&r) {
                    Ok(r)
                } else {
                    Err(Error::not_found(format!("model {network_id}")))
                }
            }
            None => self
                .store
                .latest(names::MODELS, id.name)?
                .ok_or_else(|| Error::not_found(format!("model {network_id}"))),
        }
    }

    pub fn components_ref(&self, model: &VersionRef) -> Result<VersionRef> {
        self.store
            .latest(names::COMPONENTS, &names::components_key(model))?
            .ok_or_else(|| Error::not_found(format!("component records for {model}")))
    }

    /// Loads (once) and indexes a component bundle.
    pub fn bundle(&self, r: &VersionRef) -> Result<Arc<ComponentBundle>> {
        if let Some(b) = self.bundles.read().get(&r.version) {
            return Ok(b.clone());
        }
        let artifact = self.store.get(r)?;
        let bundle: Arc<ComponentBundle> = Arc::new(validate(&artifact.bytes)?);
        self.bundles.write().insert(r.version.clone(), bundle.clone());
        Ok(bundle)
    }

    pub fn query_components(&self, network_id: &str) -> Result<Arc<ComponentBundle>> {
        let model = self.resolve_model(network_id)?;
        self.bundle(&self.components_ref(&model)?)
    }

    pub fn query_component(&self, network_id: &str, neuron_id: u64) -> Result<ComponentRecord> {
        let bundle = self.query_components(network_id)?;
        record_at(&bundle, neuron_id).cloned()
    }
}

/// O(1) lookup: records are stored at their `neuron_id` position.
pub fn record_at(bundle: &ComponentBundle, neuron_id: u64) -> Result<&ComponentRecord> {
    usize::try_from(neuron_id)
        .ok()
        .and_then(|i| bundle.records.get(i))
        .ok_or_else(|| Error::not_found(format!("component {neuron_id} of {}", bundle.network_id)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn network_id_forms() {
        assert_eq!(NetworkId::parse("clean").unwrap(), NetworkId { name: "clean", version: None });
        let v = "a".repeat(64);
        let s = format!("toy@{v}");
        assert_eq!(NetworkId::parse(&s).unwrap().version, Some(v.as_str()));
        assert!(NetworkId::parse("toy@xyz").is_err());
        assert!(NetworkId::parse("").is_err());
        assert!(NetworkId::parse("a/b").is_err());
    }
}
