#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use xsys_core::contracts::VersionRef;
use xsys_core::inspection::InspectionService;
use xsys_core::model_service::ModelService;
use xsys_core::provision::{ProvisionConfig, ProvisionManifest, Provisioner};
use xsys_core::search::SearchService;
use xsys_core::store::{ArtifactStore, DataService};

pub struct Stack {
    pub dir: tempfile::TempDir,
    pub store: Arc<ArtifactStore>,
    pub data: Arc<DataService>,
    pub models: Arc<ModelService>,
    pub search: SearchService,
    pub inspection: InspectionService,
}

impl Stack {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(ArtifactStore::open(dir.path()).unwrap());
        Self::over(dir, store)
    }

    fn over(dir: tempfile::TempDir, store: Arc<ArtifactStore>) -> Self {
        let data = Arc::new(DataService::new(store.clone()));
        let models = Arc::new(ModelService::new(data.clone()));
        Stack {
            search: SearchService::new(data.clone()),
            inspection: InspectionService::new(models.clone()),
            dir,
            store,
            data,
            models,
        }
    }

    /// Fresh services over the same store directory.
    pub fn reopen(&self) -> Stack {
        let store = Arc::new(ArtifactStore::open(self.dir.path()).unwrap());
        let data = Arc::new(DataService::new(store.clone()));
        let models = Arc::new(ModelService::new(data.clone()));
        Stack {
            search: SearchService::new(data.clone()),
            inspection: InspectionService::new(models.clone()),
            dir: tempfile::tempdir().unwrap(),
            store,
            data,
            models,
        }
    }
}

pub struct Provisioned {
    pub stack: Stack,
    pub manifest_ref: VersionRef,
    pub manifest: ProvisionManifest,
}

/// The default configuration, provisioned once per test binary.
pub fn provisioned() -> &'static Provisioned {
    static CELL: OnceLock<Provisioned> = OnceLock::new();
    CELL.get_or_init(|| {
        let stack = Stack::new();
        let (manifest_ref, manifest) = Provisioner::new(stack.models.clone())
            .run(&ProvisionConfig::default())
            .unwrap();
        Provisioned {
            stack,
            manifest_ref,
            manifest,
        }
    })
}
