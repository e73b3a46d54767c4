//! Offline provisioning: dataset, models, activations, component records,
//! layout and a content-addressed manifest tying them together.
//!
//! Every step is deterministic in its inputs and stores through the
//! content-addressed store, so rerunning a config reuses existing versions.

mod components;
mod generate;
mod layout;
mod train;

pub use components::{
    alignment_labels, analyze_components, mean_pairwise_cosine, ComponentAnalysis, ComponentParams,
    N_ALIGNMENT_LABELS,
};
pub use generate::{
    gen_dataset, orthonormal_vectors, DatasetParams, ARTIFACT_WORD, CLUSTER_SIGMA, POISON_ARTIFACT_WEIGHT,
    POISON_CLASS_WEIGHT,
};
pub use layout::{LayoutMethod, PcaLayout};
pub use train::{accuracy, train_mlp, ShortcutWiring, TrainParams};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contracts::{to_canonical_bytes, ComponentBundle, VersionRef, QUALITY_METRIC};
use crate::dataset::Split;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, MATRIX_MEDIA_TYPE};
use crate::model_service::ModelService;
use crate::search::{Embedder, EmbedderArtifact, DEFAULT_EMBEDDER_ID};
use crate::store::{names, network_id_of, Provenance, JSON_MEDIA_TYPE};

pub const MANIFEST_KEY: &str = "provision";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    pub seed: u64,
    pub wiring: ShortcutWiring,
}

fn default_models() -> Vec<ModelConfig> {
    vec![
        ModelConfig {
            name: "clean".into(),
            seed: 11,
            wiring: ShortcutWiring::Blocked,
        },
        ModelConfig {
            name: "clever_hans".into(),
            seed: 12,
            wiring: ShortcutWiring::Designated { unit: 3 },
        },
    ]
}

/// Single JSON config for the whole pipeline. Omitted fields take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProvisionConfig {
    pub dataset_name: String,
    pub seed: u64,
    pub n_samples: usize,
    pub input_dim: usize,
    pub embedding_dim: usize,
    pub class_names: Vec<String>,
    pub distractors: Vec<String>,
    pub poison_rate: f64,
    pub test_fraction: f64,
    pub test_poison_rate: f64,
    pub hidden_width: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub models: Vec<ModelConfig>,
    pub k: usize,
    pub probe_size: usize,
    pub probe_seed: u64,
    pub epsilon: f64,
    pub embedder_id: String,
}

impl Default for ProvisionConfig {
    fn default() -> Self {
        ProvisionConfig {
            dataset_name: "synthetic".into(),
            seed: 1,
            n_samples: 2000,
            input_dim: 9,
            embedding_dim: 16,
            class_names: vec!["circle".into(), "square".into()],
            distractors: ["stripe", "dot", "ring", "grid", "wave", "spiral", "edge", "blur", "glare", "shadow"]
                .into_iter()
                .map(String::from)
                .collect(),
            poison_rate: 0.95,
            test_fraction: 0.3,
            test_poison_rate: 0.3,
            hidden_width: 8,
            epochs: 2000,
            learning_rate: 1.0,
            models: default_models(),
            k: 9,
            probe_size: 50,
            probe_seed: 7,
            epsilon: crate::lrp::DEFAULT_EPSILON,
            embedder_id: DEFAULT_EMBEDDER_ID.into(),
        }
    }
}

impl ProvisionConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        serde_path_to_error::deserialize(de)
            .map_err(|e| Error::invalid(format!("config `{}`: {}", e.path(), e.inner())))
    }

    /// Digest of the fully defaulted config in canonical form.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&to_canonical_bytes(self)?))
    }

    pub fn dataset_params(&self) -> DatasetParams {
        DatasetParams {
            seed: self.seed,
            n_samples: self.n_samples,
            input_dim: self.input_dim,
            embedding_dim: self.embedding_dim,
            class_names: self.class_names.clone(),
            poison_rate: self.poison_rate,
            test_fraction: self.test_fraction,
            test_poison_rate: self.test_poison_rate,
            distractors: self.distractors.clone(),
        }
    }

    pub fn train_params(&self, m: &ModelConfig) -> TrainParams {
        TrainParams {
            name: m.name.clone(),
            hidden_width: self.hidden_width,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: m.seed,
            wiring: m.wiring,
        }
    }

    pub fn component_params(&self) -> ComponentParams {
        ComponentParams {
            k: self.k,
            probe_size: self.probe_size,
            probe_seed: self.probe_seed,
            epsilon: self.epsilon,
            reference_split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentOutputs {
    pub activations_version: VersionRef,
    pub embeddings_version: VersionRef,
    pub layout_version: VersionRef,
    pub component_records_version: VersionRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArtifacts {
    pub name: String,
    pub network_id: String,
    pub model_version: VersionRef,
    /// Hidden units wired to the spurious channel.
    pub spurious_units: Vec<usize>,
    #[serde(flatten)]
    pub outputs: ComponentOutputs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProvisionManifest {
    pub config_digest: String,
    pub seeds: BTreeMap<String, u64>,
    pub dataset_version: VersionRef,
    pub embedder_version: VersionRef,
    pub models: Vec<ModelArtifacts>,
}

impl ProvisionManifest {
    pub fn model(&self, name: &str) -> Option<&ModelArtifacts> {
        self.models.iter().find(|m| m.name == name)
    }
}

pub struct Provisioner {
    models: Arc<ModelService>,
}

impl Provisioner {
    pub fn new(models: Arc<ModelService>) -> Self {
        Provisioner { models }
    }

    fn put_json<T: Serialize>(&self, ns: &str, key: &str, value: &T, provenance: Provenance) -> Result<VersionRef> {
        let bytes = to_canonical_bytes(value)?;
        self.models.data().store().put(ns, key, &bytes, JSON_MEDIA_TYPE, provenance, None)
    }

    fn put_matrix(&self, ns: &str, key: &str, m: &Matrix<f64>, provenance: Provenance) -> Result<VersionRef> {
        self.models
            .data()
            .store()
            .put(ns, key, &m.encode(), MATRIX_MEDIA_TYPE, provenance, None)
    }

    pub fn dataset(&self, name: &str, p: &DatasetParams) -> Result<VersionRef> {
        let ds = gen_dataset(p)?;
        self.put_json(names::DATASETS, name, &ds, Provenance::new("gen_dataset", p, vec![])?)
    }

    /// Publishes the dataset vocabulary as a search embedder.
    pub fn embedder(&self, dataset: &VersionRef, embedder_id: &str) -> Result<VersionRef> {
        let ds = self.models.dataset(dataset)?;
        let artifact = EmbedderArtifact {
            embedder_id: embedder_id.to_string(),
            dimension: ds.embedding_dim,
            vocabulary: ds.vocabulary.clone(),
        };
        Embedder::from_artifact(artifact.clone())?;
        self.put_json(
            names::EMBEDDERS,
            embedder_id,
            &artifact,
            Provenance::new("publish_embedder", &embedder_id, vec![dataset.clone()])?,
        )
    }

    pub fn train(&self, dataset: &VersionRef, p: &TrainParams) -> Result<VersionRef> {
        let ds = self.models.dataset(dataset)?;
        let spec = train_mlp(&ds, p)?;
        self.models
            .register_with_provenance(&spec, Provenance::new("train_mlp", p, vec![dataset.clone()])?)
    }

    fn load_matrix(&self, r: &VersionRef) -> Result<Matrix<f64>> {
        Matrix::decode(&self.models.data().store().get(r)?.bytes)
    }

    pub fn layout(&self, embeddings: &VersionRef, method: &dyn LayoutMethod) -> Result<VersionRef> {
        let store = self.models.data().store();
        let model = store
            .get_provenance(embeddings)?
            .model_version
            .ok_or_else(|| Error::invalid(format!("{embeddings} has no model provenance")))?;
        let coords = method.project(&self.load_matrix(embeddings)?)?;
        let provenance = Provenance::new("layout", &method.name(), vec![embeddings.clone()])?.with_model(model.clone());
        self.put_matrix(names::LAYOUTS, &names::layout_key(&model), &coords, provenance)
    }

    /// Activations, embeddings, layout and the published component bundle.
    pub fn components(
        &self,
        model: &VersionRef,
        dataset: &VersionRef,
        embedder: &VersionRef,
        p: &ComponentParams,
        method: &dyn LayoutMethod,
    ) -> Result<ComponentOutputs> {
        let loaded = self.models.load(model)?;
        let ds = self.models.dataset(dataset)?;
        let emb_artifact: EmbedderArtifact = serde_json::from_slice(&self.models.data().store().get(embedder)?.bytes)
            .map_err(|e| Error::invalid(format!("malformed embedder: {e}")))?;
        let emb = Embedder::from_artifact(emb_artifact)?;

        let layer = loaded.network.inspect_layer();
        let activations_version = self.models.batch_activations_blocking(model, dataset, layer)?;
        let activations = self.load_matrix(&activations_version)?;
        let network_id = network_id_of(model);
        let analysis = analyze_components(&network_id, &loaded.network, &ds, &activations, &emb, p)?;

        let embeddings_version = self.put_matrix(
            names::EMBEDDINGS,
            &names::embeddings_key(model, emb.id()),
            &analysis.embeddings,
            Provenance::new(
                "compute_components",
                p,
                vec![model.clone(), dataset.clone(), activations_version.clone(), embedder.clone()],
            )?
            .with_model(model.clone()),
        )?;
        let layout_version = self.layout(&embeddings_version, method)?;
        let coords = self.load_matrix(&layout_version)?;

        let mut records = analysis.records;
        for (r, xy) in records.iter_mut().zip(coords.iter_rows()) {
            r.layout_xy = [xy[0], xy[1]];
        }
        let bundle = ComponentBundle {
            network_id,
            model: model.clone(),
            k: p.k,
            quality_metric: QUALITY_METRIC.to_string(),
            records,
        };
        let bytes = crate::contracts::canonical_serialize(&bundle)?;
        let component_records_version = self.models.data().store().put(
            names::COMPONENTS,
            &names::components_key(model),
            &bytes,
            JSON_MEDIA_TYPE,
            Provenance::new(
                "publish_components",
                p,
                vec![
                    model.clone(),
                    dataset.clone(),
                    activations_version.clone(),
                    embeddings_version.clone(),
                    layout_version.clone(),
                ],
            )?
            .with_model(model.clone()),
            None,
        )?;
        Ok(ComponentOutputs {
            activations_version,
            embeddings_version,
            layout_version,
            component_records_version,
        })
    }

    /// Full pipeline; returns the stored manifest's ref and contents.
    pub fn run(&self, config: &ProvisionConfig) -> Result<(VersionRef, ProvisionManifest)> {
        if config.models.is_empty() {
            return Err(Error::invalid("config lists no models"));
        }
        let config_digest = config.digest()?;
        let dataset_version = self.dataset(&config.dataset_name, &config.dataset_params())?;
        let embedder_version = self.embedder(&dataset_version, &config.embedder_id)?;
        let mut seeds = BTreeMap::from([
            ("dataset".to_string(), config.seed),
            ("probe".to_string(), config.probe_seed),
        ]);
        let mut models = Vec::new();
        for m in &config.models {
            seeds.insert(format!("model:{}", m.name), m.seed);
            let model_version = self.train(&dataset_version, &config.train_params(m))?;
            let outputs = self.components(
                &model_version,
                &dataset_version,
                &embedder_version,
                &config.component_params(),
                &PcaLayout,
            )?;
            models.push(ModelArtifacts {
                name: m.name.clone(),
                network_id: network_id_of(&model_version),
                model_version,
                spurious_units: match m.wiring {
                    ShortcutWiring::Blocked => vec![],
                    ShortcutWiring::Designated { unit } => vec![unit],
                },
                outputs,
            });
        }
        let manifest = ProvisionManifest {
            config_digest: config_digest.clone(),
            seeds,
            dataset_version,
            embedder_version,
            models,
        };
        let mut inputs = vec![manifest.dataset_version.clone(), manifest.embedder_version.clone()];
        for m in &manifest.models {
            inputs.push(m.model_version.clone());
            inputs.push(m.outputs.component_records_version.clone());
        }
        let r = self.put_json(
            names::MANIFESTS,
            MANIFEST_KEY,
            &manifest,
            Provenance::new("provision_all", &config_digest, inputs)?,
        )?;
        Ok((r, manifest))
    }
}
