//! HTTP session service.
//!
//! Routes:
//!
//! - `POST /v1/profiles` creates a profile
//! - `GET /v1/profiles/{id}` fetches one
//! - `POST /v1/support` runs one assistance round (multipart `meta` + `image`)
//! - `GET /v1/profiles/{id}/log?limit=N` lists recent requests, newest first
//! - `GET /v1/healthz` reports liveness and the backend kind
//!
//! Every error is a JSON body `{kind, message}` with a stable `kind`.

pub mod error;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::multipart::{Multipart, MultipartRejection};
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::Utc;
use chromalens_core::domain::{new_id, DEFAULT_MAX_IMAGE_BYTES};
use chromalens_core::{
    classify_request, make_user_profile, BackendConfig, BackendKind, CapturedContext, CvdType,
    ImageSource, LlmGateway, ModeHint, Pipeline, PromptEngine, SupportResponse, TemplateSet,
    UserProfile,
};
use serde::Deserialize;
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::cors::CorsLayer;
use tower_http::trace::TraceLayer;
use tracing::error;

pub use error::{ApiError, ErrorBody};
pub use store::{Outcome, ProfileStore, SessionLog, SessionLogEntry};

const DEFAULT_LOG_LIMIT: usize = 20;
/// Room for the `meta` part and multipart framing on top of the image.
const MULTIPART_OVERHEAD: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("backend: {0}")]
    Backend(#[from] chromalens_core::GatewayError),
    #[error("templates: {0}")]
    Templates(#[from] chromalens_core::PromptError),
    #[error("data directory: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen_addr: SocketAddr,
    pub data_dir: PathBuf,
    pub max_image_bytes: usize,
    pub template_dir: Option<PathBuf>,
    pub backend: BackendConfig,
}

impl ServiceConfig {
    /// Reads `CL_LISTEN_ADDR`, `CL_DATA_DIR`, `CL_MAX_IMAGE_MB`,
    /// `CL_TEMPLATE_DIR` and the backend variables.
    pub fn from_env() -> Result<Self, StartupError> {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.trim().is_empty());
        let listen_addr = get("CL_LISTEN_ADDR")
            .unwrap_or_else(|| "127.0.0.1:8080".into())
            .parse()
            .map_err(|e| StartupError::Config(format!("CL_LISTEN_ADDR: {e}")))?;
        let max_image_bytes = match get("CL_MAX_IMAGE_MB") {
            Some(v) => {
                let mb: f64 = v
                    .parse()
                    .ok()
                    .filter(|m: &f64| *m > 0.0)
                    .ok_or_else(|| StartupError::Config(format!("CL_MAX_IMAGE_MB: bad value `{v}`")))?;
                (mb * 1024.0 * 1024.0) as usize
            }
            None => DEFAULT_MAX_IMAGE_BYTES,
        };
        Ok(ServiceConfig {
            listen_addr,
            data_dir: get("CL_DATA_DIR").unwrap_or_else(|| "data".into()).into(),
            max_image_bytes,
            template_dir: get("CL_TEMPLATE_DIR").map(PathBuf::from),
            backend: BackendConfig::from_env()?,
        })
    }
}

pub struct AppState {
    pub pipeline: Pipeline,
    pub profiles: ProfileStore,
    pub log: SessionLog,
    pub max_image_bytes: usize,
}

impl AppState {
    pub async fn new(config: &ServiceConfig) -> Result<Self, StartupError> {
        let templates = match &config.template_dir {
            Some(dir) => TemplateSet::load(dir)?,
            None => TemplateSet::builtin(),
        };
        let gateway = LlmGateway::new(config.backend.clone())?;
        Ok(AppState {
            pipeline: Pipeline::new(PromptEngine::new(templates), gateway),
            profiles: ProfileStore::open(&config.data_dir).await?,
            log: SessionLog::open(&config.data_dir).await?,
            max_image_bytes: config.max_image_bytes,
        })
    }

    pub fn backend_kind(&self) -> BackendKind {
        self.pipeline.gateway().kind()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let body_limit = state.max_image_bytes + MULTIPART_OVERHEAD;
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/profiles", post(create_profile))
        .route("/v1/profiles/{id}", get(get_profile))
        .route("/v1/profiles/{id}/log", get(read_log))
        .route("/v1/support", post(support))
        .fallback(not_found)
        .method_not_allowed_fallback(method_not_allowed)
        .layer(DefaultBodyLimit::max(body_limit))
        .layer(CorsLayer::permissive())
        .layer(TraceLayer::new_for_http())
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

async fn method_not_allowed() -> ApiError {
    ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed")
}

async fn healthz(State(app): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({ "status": "ok", "backend": app.backend_kind() }))
}

#[derive(Deserialize)]
struct CreateProfile {
    display_name: String,
    cvd_type: String,
    #[serde(default)]
    notes: Option<String>,
}

async fn create_profile(
    State(app): State<Arc<AppState>>,
    body: axum::body::Bytes,
) -> Result<(StatusCode, Json<UserProfile>), ApiError> {
    let req: CreateProfile = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request(format!("profile body: {e}")))?;
    let cvd: CvdType = req.cvd_type.parse()?;
    let profile = make_user_profile(&req.display_name, cvd, req.notes.as_deref())?;
    let saved = app.profiles.insert(profile).await.map_err(|e| {
        error!(error = %e, "persisting profile");
        ApiError::internal("could not persist profile")
    })?;
    Ok((StatusCode::CREATED, Json(saved)))
}

async fn get_profile(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<UserProfile>, ApiError> {
    app.profiles
        .get(&id)
        .await
        .map(Json)
        .ok_or_else(|| ApiError::profile_not_found(&id))
}

#[derive(Deserialize)]
struct LogQuery {
    limit: Option<String>,
}

async fn read_log(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<LogQuery>,
) -> Result<Json<Vec<SessionLogEntry>>, ApiError> {
    let limit = match q.limit {
        Some(raw) => raw
            .parse::<usize>()
            .map_err(|_| ApiError::bad_request(format!("limit must be a non-negative integer, got `{raw}`")))?,
        None => DEFAULT_LOG_LIMIT,
    };
    if app.profiles.get(&id).await.is_none() {
        return Err(ApiError::profile_not_found(&id));
    }
    app.log.recent(&id, limit).await.map(Json).map_err(|e| {
        error!(error = %e, "reading session log");
        ApiError::internal("could not read session log")
    })
}

#[derive(Deserialize)]
struct SupportMeta {
    profile_id: String,
    mode_hint: String,
    #[serde(default)]
    utterance: Option<String>,
}

struct UploadedImage {
    bytes: Vec<u8>,
    stem: Option<String>,
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> ApiError {
    if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
        ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "payload_too_large", e.body_text())
    } else {
        ApiError::bad_request(e.body_text())
    }
}

async fn read_parts(mut multipart: Multipart) -> Result<(SupportMeta, Option<UploadedImage>), ApiError> {
    let mut meta = None;
    let mut image = None;
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        match field.name() {
            Some("meta") => {
                let bytes = field.bytes().await.map_err(multipart_error)?;
                meta = Some(
                    serde_json::from_slice::<SupportMeta>(&bytes)
                        .map_err(|e| ApiError::bad_request(format!("meta part: {e}")))?,
                );
            }
            Some("image") => {
                let stem = field.file_name().and_then(|n| {
                    std::path::Path::new(n)
                        .file_stem()
                        .map(|s| s.to_string_lossy().into_owned())
                });
                let bytes = field.bytes().await.map_err(multipart_error)?;
                image = Some(UploadedImage {
                    bytes: bytes.to_vec(),
                    stem,
                });
            }
            _ => {}
        }
    }
    let meta = meta.ok_or_else(|| ApiError::bad_request("missing `meta` part"))?;
    Ok((meta, image))
}

async fn support(
    State(app): State<Arc<AppState>>,
    multipart: Result<Multipart, MultipartRejection>,
) -> Result<Json<SupportResponse>, ApiError> {
    let multipart = multipart.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let (meta, image) = read_parts(multipart).await?;
    let mode_hint: ModeHint = meta.mode_hint.parse().map_err(ApiError::bad_request)?;
    let profile = app
        .profiles
        .get(&meta.profile_id)
        .await
        .ok_or_else(|| ApiError::profile_not_found(&meta.profile_id))?;

    let request_id = new_id();
    let received_at = Utc::now();
    let image_digest = image.as_ref().map(|i| chromalens_core::domain::image_digest(&i.bytes));
    let request = classify_request(mode_hint, meta.utterance.as_deref());

    let result: Result<SupportResponse, ApiError> = async {
        let request = request.clone()?;
        let image = image.ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing_image", "missing `image` part"))?;
        let context = CapturedContext::new(
            image.bytes,
            ImageSource::Upload,
            image.stem,
            received_at,
            app.max_image_bytes,
        )?;
        Ok(app
            .pipeline
            .run_request(&profile, &request, &context, request_id.clone())
            .await?)
    }
    .await;

    let entry = SessionLogEntry {
        request_id: request_id.clone(),
        profile_id: profile.profile_id.clone(),
        mode_hint,
        mode: request.as_ref().ok().map(|r| r.mode()),
        utterance: meta.utterance.clone(),
        image_digest,
        outcome: match &result {
            Ok(_) => Outcome::Ok,
            Err(e) => Outcome::Error { kind: e.kind().to_string() },
        },
        received_at,
        completed_at: Utc::now(),
    };
    if let Err(e) = app.log.append(&entry).await {
        error!(error = %e, %request_id, "appending session log");
        return Err(ApiError::internal("could not write session log").with_request_id(&request_id));
    }
    result.map(Json).map_err(|e| e.with_request_id(&request_id))
}
