//! Model services: versioned registry, inference with activation capture,
//! steering, and batch activation jobs.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::{Condvar, Mutex, RwLock};
use serde::Serialize;

use crate::contracts::{canonical_serialize, ModelMetadata, ModelSpec, SteeringModifier, VersionRef};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{Matrix, MATRIX_MEDIA_TYPE};
use crate::nn::{Prediction, Steering};
use crate::store::{names, DataService, Provenance, JSON_MEDIA_TYPE};
use crate::Network;

#[derive(Debug)]
pub struct LoadedModel {
    pub reference: VersionRef,
    pub spec: ModelSpec,
    pub network: Network,
}

pub type JobId = u64;

#[derive(Debug, Clone, PartialEq)]
pub enum JobStatus {
    Queued,
    Running,
    Done(VersionRef),
    Failed(String),
}

type Job = Box<dyn FnOnce() -> Result<VersionRef> + Send + 'static>;

/// Fixed-size worker pool; job status is polled, never pushed.
struct JobPool {
    sender: Mutex<Option<mpsc::Sender<(JobId, Job)>>>,
    status: Arc<(Mutex<HashMap<JobId, JobStatus>>, Condvar)>,
    next_id: AtomicU64,
    workers: Vec<JoinHandle<()>>,
}

impl JobPool {
    fn new(workers: usize) -> Self {
        let (tx, rx) = mpsc::channel::<(JobId, Job)>();
        let rx = Arc::new(Mutex::new(rx));
        let status: Arc<(Mutex<HashMap<JobId, JobStatus>>, Condvar)> = Arc::default();
        let handles = (0..workers.max(1))
            .map(|_| {
                let rx = rx.clone();
                let status = status.clone();
                std::thread::spawn(move || loop {
                    let next = rx.lock().recv();
                    let Ok((id, job)) = next else { break };
                    status.0.lock().insert(id, JobStatus::Running);
                    let outcome = match job() {
                        Ok(r) => JobStatus::Done(r),
                        Err(e) => JobStatus::Failed(e.to_string()),
                    };
                    status.0.lock().insert(id, outcome);
                    status.1.notify_all();
                })
            })
            .collect();
        JobPool {
            sender: Mutex::new(Some(tx)),
            status,
            next_id: AtomicU64::new(1),
            workers: handles,
        }
    }

    fn submit(&self, job: Job) -> Result<JobId> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        self.status.0.lock().insert(id, JobStatus::Queued);
        self.sender
            .lock()
            .as_ref()
            .ok_or_else(|| Error::internal("job pool shut down"))?
            .send((id, job))
            .map_err(|_| Error::internal("job pool shut down"))?;
        Ok(id)
    }

    fn status(&self, id: JobId) -> Option<JobStatus> {
        self.status.0.lock().get(&id).cloned()
    }

    fn wait(&self, id: JobId) -> Result<VersionRef> {
        let mut map = self.status.0.lock();
        loop {
            match map.get(&id) {
                None => return Err(Error::not_found(format!("job {id}"))),
                Some(JobStatus::Done(r)) => return Ok(r.clone()),
                Some(JobStatus::Failed(e)) => return Err(Error::internal(format!("job {id} failed: {e}"))),
                Some(_) => self.status.1.wait(&mut map),
            }
        }
    }
}

impl Drop for JobPool {
    fn drop(&mut self) {
        self.sender.lock().take();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

pub struct ModelService {
    data: Arc<DataService>,
    models: RwLock<HashMap<String, Arc<LoadedModel>>>,
    datasets: RwLock<HashMap<String, Arc<Dataset>>>,
    register_lock: Mutex<()>,
    calls: AtomicU64,
    jobs: JobPool,
}

#[derive(Serialize)]
struct BatchParams {
    layer: usize,
}

impl ModelService {
    pub fn new(data: Arc<DataService>) -> Self {
        Self::with_workers(data, 2)
    }

    pub fn with_workers(data: Arc<DataService>, workers: usize) -> Self {
        ModelService {
            data,
            models: RwLock::new(HashMap::new()),
            datasets: RwLock::new(HashMap::new()),
            register_lock: Mutex::new(()),
            calls: AtomicU64::new(0),
            jobs: JobPool::new(workers),
        }
    }

    pub fn data(&self) -> &Arc<DataService> {
        &self.data
    }

    /// Number of service operations invoked (registry reads excluded).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn count(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    /// Registers a spec; the version is the hash of its canonical bytes.
    pub fn register_model(&self, spec: &ModelSpec) -> Result<VersionRef> {
        self.register_with_provenance(spec, Provenance::root("register_model"))
    }

    pub fn register_with_provenance(&self, spec: &ModelSpec, provenance: Provenance) -> Result<VersionRef> {
        let bytes = canonical_serialize(spec)?;
        Network::from_spec(spec)?;
        let _guard = self.register_lock.lock();
        self.data
            .store()
            .put(names::MODELS, &spec.name, &bytes, JSON_MEDIA_TYPE, provenance, None)
    }

    /// Loads a registered model (cached after the first fetch).
    pub fn load(&self, model: &VersionRef) -> Result<Arc<LoadedModel>> {
        if model.namespace != names::MODELS {
            return Err(Error::not_found(format!("{model} is not a model")));
        }
        if let Some(m) = self.models.read().get(&model.version) {
            if m.reference == *model {
                return Ok(m.clone());
            }
        }
        let artifact = self.data.store().get(model)?;
        let spec: ModelSpec = crate::contracts::validate(&artifact.bytes)?;
        let network = Network::from_spec(&spec)?;
        let loaded = Arc::new(LoadedModel {
            reference: model.clone(),
            spec,
            network,
        });
        self.models.write().insert(model.version.clone(), loaded.clone());
        Ok(loaded)
    }

    pub fn dataset(&self, r: &VersionRef) -> Result<Arc<Dataset>> {
        if let Some(d) = self.datasets.read().get(&r.version) {
            return Ok(d.clone());
        }
        let ds = Arc::new(Dataset::from_bytes(&self.data.store().get(r)?.bytes)?);
        self.datasets.write().insert(r.version.clone(), ds.clone());
        Ok(ds)
    }

    /// The dataset a model was trained on, from its provenance record.
    pub fn training_dataset(&self, model: &VersionRef) -> Result<Option<VersionRef>> {
        let record = self.data.store().get_provenance(model)?;
        Ok(record.inputs.into_iter().find(|r| r.namespace == names::DATASETS))
    }

    pub fn predict(
        &self,
        model: &VersionRef,
        input: &[f64],
        steering: Option<&[SteeringModifier]>,
    ) -> Result<Prediction<f64>> {
        self.count();
        let loaded = self.load(model)?;
        let steering = match steering {
            Some(mods) => Some(Steering::new(&loaded.network, mods)?),
            None => None,
        };
        loaded.network.forward(input, steering.as_ref())
    }

    pub fn get_activations(&self, model: &VersionRef, input: &[f64], layer: usize) -> Result<Vec<f64>> {
        self.count();
        let loaded = self.load(model)?;
        if layer >= loaded.network.layers().len() {
            return Err(Error::invalid(format!("layer {layer} out of range")));
        }
        let p = loaded.network.forward(input, None)?;
        Ok(p.trace.layers[layer].clone())
    }

    /// Queues a batch activation job over every sample of `dataset`.
    pub fn batch_activations(self: &Arc<Self>, model: &VersionRef, dataset: &VersionRef, layer: usize) -> Result<JobId> {
        self.count();
        // Fail fast on missing inputs instead of inside the worker.
        self.load(model)?;
        if !self.data.store().contains(dataset) {
            return Err(Error::not_found(format!("dataset {dataset}")));
        }
        let this = self.clone();
        let (model, dataset) = (model.clone(), dataset.clone());
        self.jobs
            .submit(Box::new(move || this.compute_batch(&model, &dataset, layer)))
    }

    pub fn job_status(&self, id: JobId) -> Option<JobStatus> {
        self.jobs.status(id)
    }

    pub fn wait_job(&self, id: JobId) -> Result<VersionRef> {
        self.jobs.wait(id)
    }

    /// Synchronous form of [`Self::batch_activations`].
    pub fn batch_activations_blocking(
        self: &Arc<Self>,
        model: &VersionRef,
        dataset: &VersionRef,
        layer: usize,
    ) -> Result<VersionRef> {
        let id = self.batch_activations(model, dataset, layer)?;
        self.wait_job(id)
    }

    fn compute_batch(&self, model: &VersionRef, dataset: &VersionRef, layer: usize) -> Result<VersionRef> {
        let loaded = self.load(model)?;
        let ds = self.dataset(dataset)?;
        if layer >= loaded.network.layers().len() {
            return Err(Error::invalid(format!("layer {layer} out of range")));
        }
        let width = loaded.network.width(layer);
        let mut matrix = Matrix::zeros(ds.samples.len(), width);
        for (i, s) in ds.samples.iter().enumerate() {
            let p = loaded.network.forward(&s.features, None)?;
            matrix.row_mut(i).copy_from_slice(&p.trace.layers[layer]);
        }
        let provenance = Provenance::new("batch_activations", &BatchParams { layer }, vec![model.clone(), dataset.clone()])?
            .with_model(model.clone());
        self.data.store().put(
            names::ACTIVATIONS,
            &names::activations_key(model, dataset, layer),
            &matrix.encode(),
            MATRIX_MEDIA_TYPE,
            provenance,
            None,
        )
    }

    pub fn model_metadata(&self, model: &VersionRef) -> Result<ModelMetadata> {
        self.count();
        let loaded = self.load(model)?;
        Ok(ModelMetadata {
            name: loaded.spec.name.clone(),
            version: model.clone(),
            input_dim: loaded.spec.input_dim,
            class_names: loaded.spec.class_names.clone(),
            provenance_note: loaded.spec.provenance_note.clone(),
            metrics: loaded.spec.metrics.clone(),
            n_components: loaded.network.n_components(),
        })
    }

    /// Metadata for the latest version of every registered model name.
    pub fn list_models(&self) -> Result<Vec<ModelMetadata>> {
        let mut out = Vec::new();
        for key in self.data.store().list_keys(names::MODELS)? {
            if let Some(r) = self.data.store().latest(names::MODELS, &key)? {
                out.push(self.model_metadata(&r)?);
            }
        }
        Ok(out)
    }
}
