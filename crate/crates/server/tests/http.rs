use std::sync::Arc;

use serde_json::json;
use xsys_core::fixtures::publish_search_fixture;
use xsys_core::model_service::ModelService;
use xsys_core::search::DEFAULT_EMBEDDER_ID;
use xsys_core::store::{network_id_of, ArtifactStore, DataService};
use xsys_server::{serve_until, ServerConfig, AUDIT_HEADER, CACHE_HEADER, TRACE_HEADER};

fn write_config(dir: &std::path::Path, extra: serde_json::Value) -> std::path::PathBuf {
    let mut cfg = json!({
        "store_dir": "store",
        "state_dir": "state",
        "tokens_file": "tokens.json",
        "gateway": {"audit_fsync": false},
    });
    cfg.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
    let tokens = json!({"tok": {"principal_id": "dana", "role": "developer"}});
    std::fs::write(dir.join("tokens.json"), tokens.to_string()).unwrap();
    let path = dir.join("server.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn relative_paths_resolve_against_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig::from_file(&write_config(dir.path(), json!({}))).unwrap();
    assert_eq!(cfg.store_dir, dir.path().join("store"));
    assert_eq!(cfg.tokens_file, dir.path().join("tokens.json"));
    assert_eq!(cfg.listen, "127.0.0.1:8080");
    assert!(!cfg.gateway.audit_fsync);
    assert_eq!(cfg.tokens().unwrap().authenticate(Some("Bearer tok")).unwrap().principal_id, "dana");
}

#[test]
fn unknown_config_fields_name_their_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), json!({"gateway": {"cache_size": 1}}));
    let err = ServerConfig::from_file(&path).unwrap_err().to_string();
    assert!(err.contains("gateway"), "{err}");
}

#[test]
fn responses_carry_trace_audit_and_cache_headers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig::from_file(&write_config(dir.path(), json!({}))).unwrap();
    let store = Arc::new(ArtifactStore::open(&cfg.store_dir).unwrap());
    let models = ModelService::new(Arc::new(DataService::new(store)));
    let fx = publish_search_fixture(&models, "fx", DEFAULT_EMBEDDER_ID, 20, 8, 3).unwrap();
    let gateway = Arc::new(cfg.open_gateway().unwrap());

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    let gw = gateway.clone();
    let server = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            serve_until(listener, gw, async {
                let _ = stopped.await;
            })
            .await
            .unwrap()
        })
    });

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let body = json!({
        "network_id": network_id_of(&fx.model),
        "query": ["artifact"],
        "used_foundation_model": DEFAULT_EMBEDDER_ID,
    })
    .to_string();
    let send = || {
        agent
            .post(&format!("{base}/api/search"))
            .header("authorization", "Bearer tok")
            .send(body.as_str())
            .unwrap()
    };
    let header = |r: &ureq::http::Response<ureq::Body>, name: &str| {
        r.headers().get(name).map(|v| v.to_str().unwrap().to_string())
    };
    let first = send();
    assert_eq!(first.status().as_u16(), 200);
    assert_eq!(header(&first, "content-type").as_deref(), Some("application/json"));
    assert_eq!(header(&first, AUDIT_HEADER).as_deref(), Some("1"));
    assert_eq!(header(&first, CACHE_HEADER).as_deref(), Some("miss"));
    assert!(header(&first, TRACE_HEADER).is_some());
    let second = send();
    assert_eq!(header(&second, AUDIT_HEADER).as_deref(), Some("2"));
    assert_eq!(header(&second, CACHE_HEADER).as_deref(), Some("hit"));

    let mut denied = agent.get(&format!("{base}/api/audit")).call().unwrap();
    assert_eq!(denied.status().as_u16(), 401);
    let envelope: serde_json::Value = serde_json::from_slice(&denied.body_mut().read_to_vec().unwrap()).unwrap();
    assert_eq!(envelope["code"], "UNAUTHENTICATED");
    assert_eq!(Some(envelope["trace_id"].as_str().unwrap().to_string()), header(&denied, TRACE_HEADER));

    let health = agent.get(&format!("{base}/healthz")).call().unwrap();
    assert_eq!(health.status().as_u16(), 200);
    assert!(header(&health, AUDIT_HEADER).is_none());

    stop.send(()).unwrap();
    server.join().unwrap();
    assert_eq!(gateway.audit().len(), 3);
}
