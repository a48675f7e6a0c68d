//! HTTP/JSON front end for a loaded retrieval session.
//!
//! | method | path               | body                  |
//! |--------|--------------------|-----------------------|
//! | GET    | `/health`          |                       |
//! | GET    | `/v1/manifest`     |                       |
//! | POST   | `/v1/query`        | `QueryRequest`        |
//! | POST   | `/v1/query/batch`  | `BatchQueryRequest`   |
//! | POST   | `/v1/tokenize`     | `TokenizeRequest`     |
//! | POST   | `/v1/evaluate`     | `EvaluateRequest`     |
//!
//! Failures answer with an `ErrorBody`: 400 for usage errors, 404 for
//! unknown bugs, 422 for data errors and 500 otherwise.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tokio::net::TcpListener;

use fbl_core::api::{self, ErrorBody};
use fbl_core::pipeline::Session;
use fbl_core::store::{self, Manifest};
use fbl_core::{Error, ErrorKind};

struct AppState {
    session: Arc<Session>,
    manifest: Manifest,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match (&e, e.kind()) {
            (Error::UnknownBug(_), _) => StatusCode::NOT_FOUND,
            (_, ErrorKind::Usage) => StatusCode::BAD_REQUEST,
            (_, ErrorKind::Data) => StatusCode::UNPROCESSABLE_ENTITY,
            (_, ErrorKind::Internal) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            body: ErrorBody::from_error(&e),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                error: r.body_text(),
                kind: ErrorKind::Usage,
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

/// Run a session call on the blocking pool; scoring is CPU-bound.
async fn blocking<Req, Resp>(
    state: Arc<AppState>,
    body: Result<Json<Req>, JsonRejection>,
    f: fn(&Session, &Req) -> Result<Resp, Error>,
) -> ApiResult<Resp>
where
    Req: DeserializeOwned + Send + 'static,
    Resp: Serialize + Send + 'static,
{
    let Json(req) = body?;
    let joined = tokio::task::spawn_blocking(move || f(&state.session, &req)).await;
    match joined {
        Ok(result) => Ok(Json(result?)),
        Err(e) => Err(ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            body: ErrorBody {
                error: format!("worker failed: {e}"),
                kind: ErrorKind::Internal,
            },
        }),
    }
}

async fn health(State(state): State<Arc<AppState>>) -> Json<api::Health> {
    Json(api::health(&state.session))
}

async fn get_manifest(State(state): State<Arc<AppState>>) -> Json<Manifest> {
    Json(state.manifest.clone())
}

async fn query(
    State(state): State<Arc<AppState>>,
    body: Result<Json<api::QueryRequest>, JsonRejection>,
) -> ApiResult<api::QueryResponse> {
    blocking(state, body, api::query).await
}

async fn query_batch(
    State(state): State<Arc<AppState>>,
    body: Result<Json<api::BatchQueryRequest>, JsonRejection>,
) -> ApiResult<api::BatchQueryResponse> {
    blocking(state, body, api::query_batch).await
}

async fn evaluate(
    State(state): State<Arc<AppState>>,
    body: Result<Json<api::EvaluateRequest>, JsonRejection>,
) -> ApiResult<api::EvaluateResponse> {
    blocking(state, body, api::evaluate).await
}

async fn tokenize(
    State(state): State<Arc<AppState>>,
    body: Result<Json<api::TokenizeRequest>, JsonRejection>,
) -> ApiResult<api::TokenizeResponse> {
    let Json(req) = body?;
    Ok(Json(api::tokenize(&state.session, &req)))
}

async fn not_found() -> ApiError {
    ApiError {
        status: StatusCode::NOT_FOUND,
        body: ErrorBody {
            error: "no such endpoint".into(),
            kind: ErrorKind::Usage,
        },
    }
}

pub fn router(session: Arc<Session>) -> Router {
    let manifest = store::manifest_for(&session, &store::artifacts(&session));
    Router::new()
        .route("/health", get(health))
        .route("/v1/manifest", get(get_manifest))
        .route("/v1/query", post(query))
        .route("/v1/query/batch", post(query_batch))
        .route("/v1/tokenize", post(tokenize))
        .route("/v1/evaluate", post(evaluate))
        .fallback(not_found)
        .with_state(Arc::new(AppState { session, manifest }))
}

/// Serve until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    session: Arc<Session>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    if let Ok(addr) = listener.local_addr() {
        tracing::info!(%addr, documents = session.docs.len(), "serving");
    }
    axum::serve(listener, router(session))
        .with_graceful_shutdown(shutdown)
        .await
}
