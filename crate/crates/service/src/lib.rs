//! JSON-over-HTTP front end for a trained localization model.
//!
//! | Method | Path                   | Result                                   |
//! |--------|------------------------|------------------------------------------|
//! | GET    | `/health`              | status, model mode and version           |
//! | POST   | `/localize`            | estimated location and per-class scores  |
//! | POST   | `/fingerprints`        | appends a labeled scan to the store      |
//! | GET    | `/fingerprints/export` | the store file                           |
//!
//! Localization reads an immutable model shared by all requests. Store
//! appends go through a single mutex-guarded writer.

mod scan;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{SystemTime, UNIX_EPOCH};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use tokio::net::TcpListener;
use wifiloc_core::data::{FingerprintRecord, FingerprintStore, Label};
use wifiloc_core::models::{load_model, TrainedModel};

pub use scan::{map_scan, scan_from_record, MappedScan, ScanEntry};

/// Failure of a single request, mapped onto an HTTP status.
#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("unmappable scan: {0}")]
    Unmappable(String),
    #[error("no model loaded")]
    NoModel,
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unmappable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::NoModel => StatusCode::SERVICE_UNAVAILABLE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

/// Failure to start serving.
#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error("cannot load model {path}: {source}")]
    Model { path: PathBuf, source: wifiloc_core::Error },
    #[error("a model path is required unless collection-only mode is enabled")]
    MissingModel,
    #[error("cannot open fingerprint store {path}: {source}")]
    Store { path: PathBuf, source: wifiloc_core::Error },
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("server error: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub model_path: Option<PathBuf>,
    pub store_path: PathBuf,
    /// Start without a model; localization then answers 503.
    pub collection_only: bool,
}

impl ServiceConfig {
    pub const DEFAULT_BIND: &'static str = "127.0.0.1:8080";
}

/// A model ready to serve, with its content version.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: TrainedModel,
    pub version: String,
}

impl LoadedModel {
    pub fn new(model: TrainedModel) -> wifiloc_core::Result<Self> {
        let version = model.model_version()?;
        Ok(Self { model, version })
    }
}

pub struct AppState {
    model: Option<Arc<LoadedModel>>,
    store: Arc<Mutex<FingerprintStore>>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>, store: FingerprintStore) -> Self {
        Self {
            model: model.map(Arc::new),
            store: Arc::new(Mutex::new(store)),
        }
    }

    /// Loads the model (unless collection-only without one) and opens or
    /// creates the store.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let model = match (&cfg.model_path, cfg.collection_only) {
            (Some(path), collection_only) => match load_model(path).and_then(LoadedModel::new) {
                Ok(m) => Some(m),
                Err(_) if collection_only && !path.exists() => None,
                Err(source) => {
                    return Err(StartupError::Model {
                        path: path.clone(),
                        source,
                    })
                }
            },
            (None, true) => None,
            (None, false) => return Err(StartupError::MissingModel),
        };
        let initial_aps = model.as_ref().map(|m| m.model.ap_order.clone()).unwrap_or_default();
        let store =
            FingerprintStore::open_or_create(&cfg.store_path, &initial_aps).map_err(|source| StartupError::Store {
                path: cfg.store_path.clone(),
                source,
            })?;
        Ok(Self::new(model, store))
    }

    pub fn model(&self) -> Option<&LoadedModel> {
        self.model.as_deref()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalizeRequest {
    pub scans: Vec<ScanEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubmitRequest {
    pub label: String,
    #[serde(default)]
    pub device: Option<String>,
    /// Seconds since the Unix epoch; the server clock when absent.
    #[serde(default)]
    pub timestamp: Option<i64>,
    pub scans: Vec<ScanEntry>,
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("malformed request body: {e}")))
}

fn location_json(label: &Label) -> Value {
    match label {
        Label::BuildingFloor { building, floor } => json!({ "building_id": building, "floor_id": floor }),
        Label::Location(id) => json!({ "location_id": id }),
    }
}

/// Maps, predicts and renders one localization request.
pub fn handle_localize(state: &AppState, body: &Bytes) -> Result<Value, ApiError> {
    let loaded = state.model().ok_or(ApiError::NoModel)?;
    let request: LocalizeRequest = parse_body(body)?;
    let mapped = map_scan(&request.scans, &loaded.model.ap_order)?;
    let prediction = loaded
        .model
        .predict(&mapped.record)
        .map_err(|e| ApiError::Internal(e.to_string()))?;
    let scores: Map<String, Value> = loaded
        .model
        .codec
        .output_names()
        .into_iter()
        .zip(&prediction.scores)
        .map(|(name, &s)| (name, json!(s)))
        .collect();
    Ok(json!({
        "location": location_json(&prediction.label),
        "scores": scores,
        "dropped_aps": mapped.dropped,
        "model_version": loaded.version,
    }))
}

/// Appends one labeled scan to the store. New APs extend the store header.
pub fn handle_submit_fingerprint(state: &AppState, body: &Bytes) -> Result<(), ApiError> {
    let request: SubmitRequest = parse_body(body)?;
    if request.label.trim().is_empty() {
        return Err(ApiError::BadRequest("label must not be empty".into()));
    }
    if request.label.contains(['\n', '\r']) {
        return Err(ApiError::BadRequest("label must be a single line".into()));
    }
    scan::check_entries(&request.scans)?;
    let ap_order: Vec<String> = request.scans.iter().map(|s| s.ap.clone()).collect();
    let timestamp = request.timestamp.or_else(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .ok()
            .map(|d| d.as_secs() as i64)
    });
    let record = FingerprintRecord {
        rss: request
            .scans
            .iter()
            .map(|s| Some(wifiloc_core::data::clamp_rss(s.rss)))
            .collect(),
        location_id: Some(request.label),
        device_id: request.device.filter(|d| !d.is_empty()),
        timestamp,
        ..Default::default()
    };
    let mut store = state
        .store
        .lock()
        .map_err(|_| ApiError::Internal("fingerprint store lock poisoned".into()))?;
    store
        .append(&ap_order, std::slice::from_ref(&record))
        .map_err(|e| ApiError::Internal(format!("cannot store fingerprint: {e}")))?;
    Ok(())
}

fn export_store(state: &AppState) -> Result<Vec<u8>, ApiError> {
    let store = state
        .store
        .lock()
        .map_err(|_| ApiError::Internal("fingerprint store lock poisoned".into()))?;
    std::fs::read(store.path()).map_err(|e| ApiError::Internal(format!("cannot read store: {e}")))
}

async fn blocking<T, F>(state: Arc<AppState>, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&AppState) -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError::Internal(format!("worker failed: {e}")))?
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(match state.model() {
        Some(m) => json!({ "status": "ok", "mode": m.model.mode.as_str(), "model_version": m.version }),
        None => json!({ "status": "ok", "mode": null, "model_version": null, "collection_only": true }),
    })
}

async fn localize(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<Value>, ApiError> {
    blocking(state, move |s| handle_localize(s, &body)).await.map(Json)
}

async fn submit(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    blocking(state, move |s| handle_submit_fingerprint(s, &body)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "stored": true }))))
}

async fn export(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let bytes = blocking(state, export_store).await?;
    Ok((
        [
            (header::CONTENT_TYPE, "text/csv; charset=utf-8"),
            (header::CONTENT_DISPOSITION, "attachment; filename=\"fingerprints.csv\""),
        ],
        bytes,
    )
        .into_response())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/localize", post(localize))
        .route("/fingerprints", post(submit))
        .route("/fingerprints/export", get(export))
        .with_state(state)
}

/// Serves on an already bound listener until `shutdown` resolves, then
/// lets in-flight requests finish.
pub async fn serve_on<F>(listener: TcpListener, state: Arc<AppState>, shutdown: F) -> Result<(), StartupError>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(StartupError::Serve)
}

/// Loads everything `cfg` names, binds and serves until Ctrl-C.
pub async fn serve(cfg: ServiceConfig) -> Result<(), StartupError> {
    let state = Arc::new(AppState::from_config(&cfg)?);
    let listener = TcpListener::bind(cfg.bind)
        .await
        .map_err(|source| StartupError::Bind { addr: cfg.bind, source })?;
    serve_on(listener, state, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await
}
