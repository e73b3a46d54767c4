//! HTTP front end. Every request, including malformed ones, is handed to
//! [`Gateway::route`]; this layer only translates between HTTP and the
//! gateway's request/response types.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::Response;
use axum::Router;
use serde::{Deserialize, Serialize};
use xsys_core::{Error, Result};
use xsys_gateway::{Gateway, GatewayConfig, GatewayRequest, TokenMap};

pub const SESSION_HEADER: &str = "x-session-id";
pub const TRACE_HEADER: &str = "x-trace-id";
pub const AUDIT_HEADER: &str = "x-audit-id";
pub const CACHE_HEADER: &str = "x-cache";
const MAX_BODY_BYTES: usize = 64 << 20;

/// Server config file. Relative paths resolve against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    /// Artifact store written by `provision`.
    pub store_dir: PathBuf,
    /// Audit log and sessions.
    pub state_dir: PathBuf,
    /// JSON map of bearer token to `{principal_id, role}`.
    pub tokens_file: PathBuf,
    #[serde(default)]
    pub gateway: GatewayConfig,
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
        let de = &mut serde_json::Deserializer::from_slice(&bytes);
        let mut cfg: ServerConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| Error::invalid(format!("config {} at `{}`: {}", path.display(), e.path(), e.inner())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.store_dir, &mut cfg.state_dir, &mut cfg.tokens_file] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn tokens(&self) -> Result<TokenMap> {
        let bytes = std::fs::read(&self.tokens_file)
            .map_err(|e| Error::invalid(format!("cannot read tokens {}: {e}", self.tokens_file.display())))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| Error::invalid(format!("tokens {}: {e}", self.tokens_file.display())))
    }

    pub fn open_gateway(&self) -> Result<Gateway> {
        Gateway::open(&self.store_dir, &self.state_dir, self.tokens()?, &self.gateway)
    }
}

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .fallback(handle)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(gateway)
}

async fn handle(
    State(gw): State<Arc<Gateway>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let header = |name: &str| headers.get(name).and_then(|v| v.to_str().ok()).map(str::to_string);
    let query: BTreeMap<String, String> = uri
        .query()
        .map(|q| form_urlencoded::parse(q.as_bytes()).into_owned().collect())
        .unwrap_or_default();
    let req = GatewayRequest {
        method: method.as_str().to_string(),
        path: uri.path().to_string(),
        query,
        body: body.to_vec(),
        authorization: header("authorization"),
        session_id: header(SESSION_HEADER),
    };
    let routed = tokio::task::spawn_blocking(move || gw.route(&req)).await;
    let resp = match routed {
        Ok(r) => r,
        Err(e) => {
            tracing::error!("gateway task failed: {e}");
            return Response::builder()
                .status(StatusCode::INTERNAL_SERVER_ERROR)
                .body(Body::empty())
                .unwrap_or_default();
        }
    };
    tracing::debug!(status = resp.status, audit_id = ?resp.audit_id, "{method} {}", uri.path());
    let mut builder = Response::builder()
        .status(resp.status)
        .header("content-type", "application/json");
    if let Some(t) = &resp.trace_id {
        builder = builder.header(TRACE_HEADER, t.as_str());
    }
    if let Some(id) = resp.audit_id {
        builder = builder.header(AUDIT_HEADER, HeaderValue::from(id));
    }
    builder = builder.header(CACHE_HEADER, if resp.cache_hit { "hit" } else { "miss" });
    builder.body(Body::from(resp.body.to_vec())).unwrap_or_default()
}

/// Serves until ctrl-c.
pub async fn serve(listener: tokio::net::TcpListener, gateway: Arc<Gateway>) -> std::io::Result<()> {
    serve_until(listener, gateway, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}

/// Serves until `shutdown` resolves, then drains open connections. The
/// gateway (and its audit lock) is released when this returns.
pub async fn serve_until(
    listener: tokio::net::TcpListener,
    gateway: Arc<Gateway>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).with_graceful_shutdown(shutdown).await
}

pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_env("XSYS_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::IsTerminal::is_terminal(&std::io::stderr()))
        .try_init();
}
