//! HTTP exposure of resource documents.
//!
//! Routes, all GET, bodies `application/xml`:
//!
//! | path | body |
//! |---|---|
//! | `/rr/v1/devices` | `<devices><device id=".."/>..</devices>` |
//! | `/rr/v1/devices/{id}/resources` | full `<device>` document |
//! | `/rr/v1/devices/{id}/resources/{family}` | one of `<cpu/>`, `<memory/>`, `<storage/>`, `<network/>` |
//!
//! Unknown ids and families give 404, other methods 405.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{Path, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use fogsim_core::model::{FogTopology, ResourceKind};
use fogsim_core::represent::{self, QueryResponse, Registry, RepresentError};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

pub const API_PREFIX: &str = "/rr/v1";
pub const XML_CONTENT_TYPE: &str = "application/xml";

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// `host:port`; port 0 picks a free port.
    pub bind_address: String,
    pub registry: Arc<Registry>,
    /// Upper bound on handling one request.
    pub read_timeout_ms: u64,
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("cannot bind {address}: {source}")]
    Bind {
        address: String,
        #[source]
        source: std::io::Error,
    },
}

/// A running agent. Dropping the handle leaves the server running until the
/// runtime shuts down; call [`AgentHandle::shutdown`] to stop it.
pub struct AgentHandle {
    local_addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    task: JoinHandle<std::io::Result<()>>,
}

impl AgentHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.local_addr
    }

    /// `http://<addr>` without a trailing slash.
    pub fn base_url(&self) -> String {
        format!("http://{}", self.local_addr)
    }

    /// Stops accepting connections and waits for in-flight requests.
    pub async fn shutdown(mut self) -> std::io::Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        self.task.await.map_err(std::io::Error::other)?
    }

    /// Runs until the server stops on its own (it normally does not).
    pub async fn wait(self) -> std::io::Result<()> {
        self.task.await.map_err(std::io::Error::other)?
    }
}

fn xml(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, XML_CONTENT_TYPE)], body).into_response()
}

fn not_found(what: String) -> Response {
    (StatusCode::NOT_FOUND, what).into_response()
}

async fn list_devices(State(registry): State<Arc<Registry>>) -> Response {
    let ids = registry.device_ids();
    xml(StatusCode::OK, represent::serialize_device_list(ids.iter().map(String::as_str)))
}

fn answer(registry: &Registry, id: &str, kind: Option<ResourceKind>) -> Response {
    match registry.query(id, kind) {
        Ok(resp) => xml(StatusCode::OK, resp.to_xml()),
        Err(RepresentError::UnknownDevice(id)) => not_found(format!("unknown device {id}\n")),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn device_resources(State(registry): State<Arc<Registry>>, Path(id): Path<String>) -> Response {
    answer(&registry, &id, None)
}

async fn device_family(
    State(registry): State<Arc<Registry>>,
    Path((id, family)): Path<(String, String)>,
) -> Response {
    match ResourceKind::from_family(&family) {
        Some(kind) => answer(&registry, &id, Some(kind)),
        None => not_found(format!("unknown resource family {family}\n")),
    }
}

async fn time_limit(State(limit): State<Duration>, request: Request, next: Next) -> Response {
    match tokio::time::timeout(limit, next.run(request)).await {
        Ok(response) => response,
        Err(_) => (StatusCode::REQUEST_TIMEOUT, "request timed out\n").into_response(),
    }
}

pub fn router(registry: Arc<Registry>, read_timeout: Duration) -> Router {
    Router::new()
        .route(&format!("{API_PREFIX}/devices"), get(list_devices))
        .route(&format!("{API_PREFIX}/devices/{{id}}/resources"), get(device_resources))
        .route(
            &format!("{API_PREFIX}/devices/{{id}}/resources/{{family}}"),
            get(device_family),
        )
        .with_state(registry)
        .layer(middleware::from_fn_with_state(read_timeout, time_limit))
}

/// Binds and starts serving in the background. Must be called inside a
/// Tokio runtime.
pub async fn serve(config: AgentConfig) -> Result<AgentHandle, AgentError> {
    if config.read_timeout_ms == 0 {
        return Err(AgentError::InvalidConfig("read_timeout_ms must be positive".into()));
    }
    let listener = TcpListener::bind(&config.bind_address)
        .await
        .map_err(|source| AgentError::Bind {
            address: config.bind_address.clone(),
            source,
        })?;
    let local_addr = listener.local_addr().map_err(|source| AgentError::Bind {
        address: config.bind_address.clone(),
        source,
    })?;
    let app = router(config.registry, Duration::from_millis(config.read_timeout_ms));
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    Ok(AgentHandle {
        local_addr,
        shutdown: Some(tx),
        task,
    })
}

/// A registry holding a snapshot of every device of `topology`.
pub fn synthetic_registry(topology: &FogTopology, slot: u64) -> Registry {
    Registry::from_documents(topology.devices().map(|d| represent::snapshot(d, slot)))
}

#[derive(Debug, Error)]
pub enum FetchError {
    #[error("cannot connect to {url}: {message}")]
    Connect { url: String, message: String },
    #[error("request to {url} timed out")]
    Timeout { url: String },
    #[error("{url} answered HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("bad response from {url}: {source}")]
    Parse {
        url: String,
        #[source]
        source: RepresentError,
    },
    #[error("request to {url} failed: {message}")]
    Other { url: String, message: String },
}

/// Supervisor-side client for an agent.
#[derive(Debug, Clone)]
pub struct Client {
    base_url: String,
    http: reqwest::Client,
}

impl Client {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client without TLS always builds");
        Client {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            http,
        }
    }

    async fn get_text(&self, url: String) -> Result<(String, String), FetchError> {
        let classify = |e: reqwest::Error, url: &str| {
            if e.is_timeout() {
                FetchError::Timeout { url: url.to_string() }
            } else if e.is_connect() {
                FetchError::Connect {
                    url: url.to_string(),
                    message: e.to_string(),
                }
            } else {
                FetchError::Other {
                    url: url.to_string(),
                    message: e.to_string(),
                }
            }
        };
        let response = self.http.get(&url).send().await.map_err(|e| classify(e, &url))?;
        let status = response.status();
        if !status.is_success() {
            return Err(FetchError::Status {
                url,
                status: status.as_u16(),
            });
        }
        let body = response.text().await.map_err(|e| classify(e, &url))?;
        Ok((url, body))
    }

    pub async fn device_ids(&self) -> Result<Vec<String>, FetchError> {
        let (url, body) = self.get_text(format!("{}{API_PREFIX}/devices", self.base_url)).await?;
        represent::parse_device_list(&body).map_err(|source| FetchError::Parse { url, source })
    }

    /// The whole document when `family` is `None`, otherwise that fragment.
    /// The result has been checked against the document invariants.
    pub async fn fetch(&self, device_id: &str, family: Option<ResourceKind>) -> Result<QueryResponse, FetchError> {
        let mut url = format!("{}{API_PREFIX}/devices/{device_id}/resources", self.base_url);
        if let Some(kind) = family {
            url.push('/');
            url.push_str(kind.family());
        }
        let (url, body) = self.get_text(url).await?;
        let parsed = match family {
            None => represent::parse_xml(&body).map(QueryResponse::Document),
            Some(kind) => represent::parse_fragment(&body).and_then(|f| {
                if f.kind() == kind {
                    Ok(QueryResponse::Fragment(f))
                } else {
                    Err(RepresentError::Invariant(format!(
                        "asked for {} but got {}",
                        kind.family(),
                        f.kind().family()
                    )))
                }
            }),
        };
        parsed.map_err(|source| FetchError::Parse { url, source })
    }
}

/// One-shot [`Client::fetch`] with a 5 s timeout.
pub async fn fetch_document(
    base_url: &str,
    device_id: &str,
    family: Option<ResourceKind>,
) -> Result<QueryResponse, FetchError> {
    Client::new(base_url, Duration::from_secs(5)).fetch(device_id, family).await
}
