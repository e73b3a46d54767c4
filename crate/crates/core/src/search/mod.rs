//! Semantic search: ranks inspect-layer components by cosine alignment
//! between a query embedding and precomputed component embeddings.

mod embedder;

pub use embedder::{hashed_trigram_embedding, normalize_term, Embedder, EmbedderArtifact, DEFAULT_EMBEDDER_ID};

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::contracts::{NeuronAlignment, SearchRequest, SearchResponse, VersionRef};
use crate::error::{Error, Result};
use crate::linalg::{cosine_with_norms, norm_sq};
use crate::matrix::Matrix;
use crate::store::{names, network_id_of, DataService};

/// Everything a search needs, bound to exact artifact versions.
#[derive(Debug)]
pub struct SearchContext {
    pub network_id: String,
    pub model: VersionRef,
    pub embedder_id: String,
    pub embeddings_version: VersionRef,
    pub embedder_version: VersionRef,
    embeddings: Matrix<f64>,
    norms_sq: Vec<f64>,
    embedder: Arc<Embedder>,
}

impl SearchContext {
    pub fn n_components(&self) -> usize {
        self.embeddings.rows()
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    /// Full ranking of every component for one term.
    pub fn rank_term(&self, term: &str) -> Result<SearchResponse> {
        let q = self.embedder.embed(term)?;
        if q.len() != self.embeddings.cols() {
            return Err(Error::internal("query and component embedding dimensions differ"));
        }
        Ok(rank(term, &q, &self.embeddings, &self.norms_sq))
    }

    pub fn search(&self, terms: &[String]) -> Result<Vec<SearchResponse>> {
        terms.iter().map(|t| self.rank_term(t)).collect()
    }
}

/// Scores every row against `query`, sorted by score descending then id ascending.
pub fn rank(term: &str, query: &[f64], embeddings: &Matrix<f64>, norms_sq: &[f64]) -> SearchResponse {
    let q_norm = norm_sq(query);
    let mut neurons: Vec<NeuronAlignment> = embeddings
        .iter_rows()
        .zip(norms_sq)
        .enumerate()
        .map(|(i, (row, n))| NeuronAlignment {
            neuron_id: i as u64,
            alignment_score: cosine_with_norms(query, q_norm, row, *n),
        })
        .collect();
    neurons.sort_by(|a, b| {
        b.alignment_score
            .total_cmp(&a.alignment_score)
            .then(a.neuron_id.cmp(&b.neuron_id))
    });
    let max_alignment = neurons.first().map_or(0.0, |n| n.alignment_score);
    let min_alignment = neurons.last().map_or(0.0, |n| n.alignment_score);
    SearchResponse {
        query: term.to_string(),
        neurons,
        max_alignment,
        min_alignment,
    }
}

type Slot = Arc<Mutex<Option<Arc<SearchContext>>>>;

pub struct SearchService {
    data: Arc<DataService>,
    contexts: Mutex<HashMap<String, Slot>>,
    embedders: Mutex<HashMap<String, Arc<Embedder>>>,
}

impl SearchService {
    pub fn new(data: Arc<DataService>) -> Self {
        SearchService {
            data,
            contexts: Mutex::new(HashMap::new()),
            embedders: Mutex::new(HashMap::new()),
        }
    }

    /// Latest embeddings artifact for `(network, embedder)`; an index read, not a fetch.
    pub fn resolve_embeddings(&self, network_id: &str, embedder_id: &str) -> Result<VersionRef> {
        let model = self.data.resolve_model(network_id)?;
        self.data
            .store()
            .latest(names::EMBEDDINGS, &names::embeddings_key(&model, embedder_id))?
            .ok_or_else(|| {
                Error::not_found(format!("embeddings for network {network_id} and embedder {embedder_id}"))
            })
    }

    /// Loads the context for `(network, embedder)` once; later calls reuse it.
    pub fn init(&self, network_id: &str, embedder_id: &str) -> Result<Arc<SearchContext>> {
        let r = self.resolve_embeddings(network_id, embedder_id)?;
        self.init_pinned(&r)
    }

    /// Context for an exact embeddings version. At most one loader per version.
    pub fn init_pinned(&self, embeddings: &VersionRef) -> Result<Arc<SearchContext>> {
        let slot = self
            .contexts
            .lock()
            .entry(embeddings.version.clone())
            .or_default()
            .clone();
        let mut guard = slot.lock();
        if let Some(ctx) = guard.as_ref() {
            return Ok(ctx.clone());
        }
        let ctx = Arc::new(self.load_context(embeddings)?);
        *guard = Some(ctx.clone());
        Ok(ctx)
    }

    /// Context previously initialized for this version, if any.
    pub fn context(&self, embeddings: &VersionRef) -> Option<Arc<SearchContext>> {
        let slot = self.contexts.lock().get(&embeddings.version).cloned()?;
        let guard = slot.lock();
        guard.clone()
    }

    fn load_context(&self, embeddings: &VersionRef) -> Result<SearchContext> {
        if embeddings.namespace != names::EMBEDDINGS {
            return Err(Error::not_found(format!("{embeddings} is not an embeddings artifact")));
        }
        let provenance = self.data.store().get_provenance(embeddings)?;
        let model = provenance
            .model_version
            .clone()
            .ok_or_else(|| Error::internal("embeddings artifact without model provenance"))?;
        let embedder_version = provenance
            .inputs
            .iter()
            .find(|r| r.namespace == names::EMBEDDERS)
            .cloned()
            .ok_or_else(|| Error::internal("embeddings artifact without embedder provenance"))?;
        let embedder = self.embedder(&embedder_version)?;
        let matrix = Matrix::decode(&self.data.store().get(embeddings)?.bytes)?;
        if matrix.cols() != embedder.dimension() {
            return Err(Error::internal(format!(
                "embeddings have {} columns, embedder dimension is {}",
                matrix.cols(),
                embedder.dimension()
            )));
        }
        let norms_sq = matrix.iter_rows().map(norm_sq).collect();
        Ok(SearchContext {
            network_id: network_id_of(&model),
            model,
            embedder_id: embedder.id().to_string(),
            embeddings_version: embeddings.clone(),
            embedder_version,
            embeddings: matrix,
            norms_sq,
            embedder,
        })
    }

    pub fn embedder(&self, r: &VersionRef) -> Result<Arc<Embedder>> {
        if let Some(e) = self.embedders.lock().get(&r.version) {
            return Ok(e.clone());
        }
        let artifact: EmbedderArtifact = serde_json::from_slice(&self.data.store().get(r)?.bytes)
            .map_err(|e| Error::internal(format!("malformed embedder artifact: {e}")))?;
        let embedder = Arc::new(Embedder::from_artifact(artifact)?);
        self.embedders.lock().insert(r.version.clone(), embedder.clone());
        Ok(embedder)
    }

    /// One response per query term. The context must already be initialized.
    pub fn search(&self, request: &SearchRequest) -> Result<Vec<SearchResponse>> {
        let terms = request
            .query
            .as_ref()
            .filter(|q| !q.is_empty())
            .ok_or_else(|| Error::invalid("search requires a non-empty `query`"))?;
        let r = self.resolve_embeddings(&request.network_id, &request.used_foundation_model)?;
        let ctx = self.context(&r).ok_or_else(|| {
            Error::not_found(format!(
                "search context for {} / {} is not initialized",
                request.network_id, request.used_foundation_model
            ))
        })?;
        ctx.search(terms)
    }
}
