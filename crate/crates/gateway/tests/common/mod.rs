#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use xsys_core::model_service::ModelService;
use xsys_core::provision::{ProvisionConfig, ProvisionManifest, Provisioner};
use xsys_core::store::{ArtifactStore, DataService};
use xsys_gateway::{
    Backend, Clock, Gateway, GatewayConfig, GatewayRequest, GatewayResponse, ManualClock, Principal, RateLimit,
    Role, TokenMap,
};

pub const DEV: &str = "tok-dev";
pub const AUDITOR: &str = "tok-aud";
pub const USER: &str = "tok-user";
pub const OTHER_USER: &str = "tok-user2";

pub fn tokens() -> TokenMap {
    let mut t = TokenMap::default();
    for (tok, id, role) in [
        (DEV, "dana", Role::Developer),
        (AUDITOR, "avery", Role::Auditor),
        (USER, "uma", Role::EndUser),
        (OTHER_USER, "ugo", Role::EndUser),
    ] {
        t.insert(
            tok,
            Principal {
                principal_id: id.into(),
                role,
            },
        );
    }
    t
}

/// Small but complete provisioning run, shared read-only by a test binary.
pub fn small_config() -> ProvisionConfig {
    ProvisionConfig {
        n_samples: 400,
        epochs: 300,
        ..ProvisionConfig::default()
    }
}

pub struct Store {
    pub dir: tempfile::TempDir,
    pub manifest: ProvisionManifest,
}

impl Store {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }
}

pub fn provision_into(path: &Path, config: &ProvisionConfig) -> ProvisionManifest {
    let store = Arc::new(ArtifactStore::open(path).unwrap());
    let models = Arc::new(ModelService::new(Arc::new(DataService::new(store))));
    Provisioner::new(models).run(config).unwrap().1
}

pub fn shared_store() -> &'static Store {
    static CELL: OnceLock<Store> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let manifest = provision_into(dir.path(), &small_config());
        Store { dir, manifest }
    })
}

pub fn config() -> GatewayConfig {
    GatewayConfig {
        rate_limit: RateLimit {
            capacity: 1000.0,
            refill_per_sec: 1000.0,
        },
        audit_fsync: false,
        ..GatewayConfig::default()
    }
}

/// A gateway with its own state directory over a given store.
pub struct Harness {
    pub state: tempfile::TempDir,
    pub store: PathBuf,
    pub clock: ManualClock,
    pub gw: Gateway,
}

impl Harness {
    pub fn over(store: &Path, config: &GatewayConfig) -> Harness {
        let state = tempfile::tempdir().unwrap();
        let clock = ManualClock::default();
        let gw = build(store, state.path(), config, clock.clone());
        Harness {
            state,
            store: store.to_path_buf(),
            clock,
            gw,
        }
    }

    pub fn new() -> Harness {
        Self::over(shared_store().path(), &config())
    }

    /// Drops the gateway and starts a fresh one over the same store and state.
    pub fn restart(self) -> Harness {
        self.restart_over(None)
    }

    /// Restart, optionally pointing at a different artifact store.
    pub fn restart_over(self, store: Option<&Path>) -> Harness {
        let Harness { state, store: old, clock, gw } = self;
        drop(gw);
        let store = store.map_or(old, Path::to_path_buf);
        let gw = build(&store, state.path(), &config(), clock.clone());
        Harness { state, store, clock, gw }
    }

    pub fn send(&self, req: GatewayRequest) -> GatewayResponse {
        self.gw.route(&req)
    }

    pub fn json(&self, req: GatewayRequest) -> serde_json::Value {
        let r = self.send(req);
        assert_eq!(r.status, 200, "{}", String::from_utf8_lossy(&r.body));
        serde_json::from_slice(&r.body).unwrap()
    }
}

pub fn build(store: &Path, state: &Path, config: &GatewayConfig, clock: ManualClock) -> Gateway {
    let backend = Backend::open(store, config.lrp_epsilon).unwrap();
    let clock: Arc<dyn Clock> = Arc::new(clock);
    Gateway::new(backend, tokens(), config, state, clock).unwrap()
}

pub fn search(token: &str, terms: &[&str]) -> GatewayRequest {
    let body = serde_json::json!({
        "query": terms,
        "network_id": "clever_hans",
        "used_foundation_model": "synthetic_vocab_v1",
    });
    GatewayRequest::new("POST", "/api/search").bearer(token).json(body.to_string())
}

pub fn inspect(token: &str, sample: &str, steering: Option<serde_json::Value>) -> GatewayRequest {
    let mut body = serde_json::json!({ "network_id": "clever_hans", "sample_id": sample });
    if let Some(s) = steering {
        body["steering"] = s;
    }
    GatewayRequest::new("POST", "/api/inspect").bearer(token).json(body.to_string())
}

pub fn whatif(token: &str, sample: &str) -> GatewayRequest {
    let body = serde_json::json!({
        "network_id": "clever_hans",
        "sample_id": sample,
        "steering": [{ "layer": 1, "unit": 3, "m": -1.0 }],
    });
    GatewayRequest::new("POST", "/api/whatif").bearer(token).json(body.to_string())
}

pub fn compare(token: &str, sample: &str) -> GatewayRequest {
    let body = serde_json::json!({ "model_a": "clean", "model_b": "clever_hans", "sample_id": sample });
    GatewayRequest::new("POST", "/api/compare").bearer(token).json(body.to_string())
}

/// Some sample id from the shared store's dataset.
pub fn sample_id() -> String {
    xsys_core::dataset::sample_id(0)
}
