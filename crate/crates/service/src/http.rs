//! JSON-over-HTTP routes for [`SessionService`].
//!
//! | method | path                      | body                         |
//! |--------|---------------------------|------------------------------|
//! | GET    | `/health`                 |                              |
//! | GET    | `/instances`              |                              |
//! | POST   | `/instances`              | instance JSON (+ `"name"`)   |
//! | GET    | `/instances/{id}`         |                              |
//! | POST   | `/sessions`               | `{instance_id, config?}`     |
//! | GET    | `/sessions/{id}`          |                              |
//! | DELETE | `/sessions/{id}`          |                              |
//! | POST   | `/sessions/{id}/answers`  | `{bit, query?}`              |
//!
//! Errors come back as `{"error": "..."}` with status 400, 404 or 409.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::sessions::{CreateSession, SessionService, SubmitAnswer, DEFAULT_IDLE_TIMEOUT};

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<SessionService>;
type ApiResult = Result<Response, ServiceError>;

fn parse<T: DeserializeOwned>(body: &Bytes) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("invalid request body: {e}")))
}

/// Runs blocking service work off the async executor.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e.to_string())))?
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_instances(State(svc): State<Shared>) -> Json<serde_json::Value> {
    Json(json!(svc.list_instances()))
}

async fn register_instance(State(svc): State<Shared>, body: Bytes) -> ApiResult {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ServiceError::BadRequest("body is not UTF-8".into()))?;
    let summary = blocking(move || svc.register_instance(&text)).await?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn get_instance(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult {
    let text = svc.instance_json(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], text).into_response())
}

async fn create_session(State(svc): State<Shared>, body: Bytes) -> ApiResult {
    let request: CreateSession = parse(&body)?;
    let view = blocking(move || svc.create_session(request)).await?;
    Ok((StatusCode::CREATED, Json(view)).into_response())
}

async fn get_session(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult {
    Ok(Json(svc.get_session(&id)?).into_response())
}

async fn delete_session(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult {
    svc.delete_session(&id)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

async fn submit_answer(State(svc): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let answer: SubmitAnswer = parse(&body)?;
    let view = blocking(move || svc.submit_answer(&id, answer)).await?;
    Ok(Json(view).into_response())
}

/// The API routes, without CORS or static files.
pub fn router(service: Arc<SessionService>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/instances", get(list_instances).post(register_instance))
        .route("/instances/{id}", get(get_instance))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session).delete(delete_session))
        .route("/sessions/{id}/answers", post(submit_answer))
        .with_state(service)
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub addr: SocketAddr,
    /// Where registered instances are stored; in-memory when `None`.
    pub data_dir: Option<PathBuf>,
    /// `None` allows any origin.
    pub cors_origin: Option<String>,
    /// Served for paths the API does not claim, e.g. a built web console.
    pub static_dir: Option<PathBuf>,
    pub idle_timeout: Duration,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            addr: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_dir: None,
            cors_origin: None,
            static_dir: None,
            idle_timeout: DEFAULT_IDLE_TIMEOUT,
        }
    }
}

/// Router with CORS and the optional static fallback applied.
pub fn app(service: Arc<SessionService>, config: &ServerConfig) -> Result<Router, ServiceError> {
    let cors = CorsLayer::new()
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE]);
    let cors = match &config.cors_origin {
        None => cors.allow_origin(Any),
        Some(origin) => cors.allow_origin(
            HeaderValue::from_str(origin)
                .map_err(|_| ServiceError::BadRequest(format!("invalid CORS origin `{origin}`")))?,
        ),
    };
    let mut app = router(service);
    if let Some(dir) = &config.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    Ok(app.layer(cors))
}

/// Binds and serves until the process is stopped. Idle sessions are swept
/// periodically.
pub async fn serve(config: ServerConfig) -> Result<(), ServiceError> {
    let service = Arc::new(match &config.data_dir {
        Some(dir) => SessionService::with_data_dir(dir, config.idle_timeout)?,
        None => SessionService::new(config.idle_timeout),
    });
    let app = app(service.clone(), &config)?;

    let sweeper = service.clone();
    let period = (config.idle_timeout / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let evicted = sweeper.evict_idle();
            if evicted > 0 {
                tracing::info!(evicted, "evicted idle sessions");
            }
        }
    });

    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app).await?;
    Ok(())
}
