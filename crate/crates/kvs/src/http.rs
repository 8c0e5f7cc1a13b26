//! HTTP surface of a node.
//!
//! | Method | Path                 | Body                    | Success             |
//! |--------|----------------------|-------------------------|---------------------|
//! | GET    | `/kv/{key}`          |                         | 200 value, or 404   |
//! | PUT    | `/kv/{key}`          | any JSON value          | 200 `{"vc":[..]}`   |
//! | DELETE | `/kv/{key}`          |                         | 200 `{"vc":[..]}`   |
//! | POST   | `/internal/messages` | `{"msgs":[message..]}`  | 200                 |
//! | GET    | `/metrics`           |                         | 200 metrics JSON    |
//!
//! Malformed bodies get 400, peer messages whose clock length does not
//! match the cluster get 422, and a node that is shutting down answers 503.

use std::future::Future;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::error::KvError;
use crate::node::{MessageBatch, Node};

pub struct ApiError(KvError);

impl From<KvError> for ApiError {
    fn from(e: KvError) -> Self {
        Self(e)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            KvError::NotReady => StatusCode::SERVICE_UNAVAILABLE,
            KvError::ClockLength { .. } | KvError::UnknownSender(_) => StatusCode::UNPROCESSABLE_ENTITY,
            KvError::EmptyKey | KvError::Protocol(_) => StatusCode::BAD_REQUEST,
            KvError::Config(_) | KvError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        error_response(status, self.0.to_string())
    }
}

fn error_response(status: StatusCode, msg: String) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

fn bad_request(e: serde_json::Error) -> Response {
    error_response(StatusCode::BAD_REQUEST, format!("malformed body: {e}"))
}

pub fn router(node: Node) -> Router {
    Router::new()
        .route("/kv/{key}", get(get_key).put(put_key).delete(delete_key))
        .route("/internal/messages", post(post_messages))
        .route("/metrics", get(metrics))
        .with_state(node)
}

/// Serves until `shutdown` resolves, then stops the node.
pub async fn serve(
    node: Node,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(node.clone());
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await;
    node.shutdown();
    result
}

async fn get_key(State(node): State<Node>, Path(key): Path<String>) -> Result<Response, ApiError> {
    Ok(match node.get(&key)? {
        Some(value) => Json(value).into_response(),
        None => error_response(StatusCode::NOT_FOUND, format!("no value for {key:?}")),
    })
}

async fn put_key(State(node): State<Node>, Path(key): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(e) => return Ok(bad_request(e)),
    };
    let vc = node.put(key, value)?;
    Ok(Json(json!({ "vc": vc })).into_response())
}

async fn delete_key(State(node): State<Node>, Path(key): Path<String>) -> Result<Response, ApiError> {
    let vc = node.delete(key)?;
    Ok(Json(json!({ "vc": vc })).into_response())
}

async fn post_messages(State(node): State<Node>, body: Bytes) -> Result<Response, ApiError> {
    let batch: MessageBatch = match serde_json::from_slice(&body) {
        Ok(b) => b,
        Err(e) => return Ok(bad_request(e)),
    };
    node.accept_peer_messages(batch.msgs)?;
    Ok(StatusCode::OK.into_response())
}

async fn metrics(State(node): State<Node>) -> Json<crate::replica::Metrics> {
    Json(node.metrics())
}
