//! Loopback-only plaintext API over a key-holding [`Client`], for a local
//! search page. Callers see keywords, file ids and file bytes, never keys,
//! tokens or ciphertexts.
//!
//! `GET /suggest?s=..` returns `{"suggestions": [..]}`, `GET /files?w=..`
//! returns `{"ids": [..]}` and `GET /file/{id}` returns the decrypted file.

use std::net::{Ipv4Addr, SocketAddr};
use std::sync::{Arc, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::client::{Client, ClientError};

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("port {0} is already in use")]
    PortInUse(u16),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SuggestResponse {
    pub suggestions: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct FilesResponse {
    pub ids: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct GatewayErrorBody {
    pub error: String,
    pub message: String,
}

#[derive(Deserialize)]
struct SuggestParams {
    #[serde(default)]
    s: String,
}

#[derive(Deserialize)]
struct FilesParams {
    #[serde(default)]
    w: String,
}

/// The client is shared behind a lock: reads run concurrently, anything
/// that mutates client state takes it exclusively.
pub type SharedClient = Arc<RwLock<Client>>;

pub fn router(client: SharedClient) -> Router {
    Router::new()
        .route("/suggest", get(suggest))
        .route("/files", get(files))
        .route("/file/{id}", get(file))
        .with_state(client)
}

fn error_response(e: ClientError) -> Response {
    let status = match e.exit_code() {
        2 => StatusCode::BAD_REQUEST,
        _ => StatusCode::BAD_GATEWAY,
    };
    let status = match &e {
        ClientError::Server { status: 404, .. } => StatusCode::NOT_FOUND,
        _ => status,
    };
    let body = GatewayErrorBody {
        error: e.kind().to_string(),
        message: e.to_string(),
    };
    (status, Json(body)).into_response()
}

async fn blocking<T, F>(client: SharedClient, f: F) -> Result<T, Response>
where
    T: Send + 'static,
    F: FnOnce(&Client) -> Result<T, ClientError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&client.read().unwrap()))
        .await
        .map_err(|_| StatusCode::INTERNAL_SERVER_ERROR.into_response())?
        .map_err(error_response)
}

async fn suggest(State(c): State<SharedClient>, Query(p): Query<SuggestParams>) -> Response {
    match blocking(c, move |c| c.suggest(&p.s)).await {
        Ok(list) => Json(SuggestResponse {
            suggestions: list.into_iter().map(|s| s.keyword).collect(),
        })
        .into_response(),
        Err(r) => r,
    }
}

async fn files(State(c): State<SharedClient>, Query(p): Query<FilesParams>) -> Response {
    match blocking(c, move |c| c.files_for(&p.w)).await {
        Ok(ids) => Json(FilesResponse { ids }).into_response(),
        Err(r) => r,
    }
}

async fn file(State(c): State<SharedClient>, Path(id): Path<String>) -> Response {
    match blocking(c, move |c| c.fetch_and_decrypt(&id)).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, "application/octet-stream")], bytes).into_response(),
        Err(r) => r,
    }
}

/// Binds `127.0.0.1:port` (0 picks a free port).
pub async fn bind(port: u16) -> Result<tokio::net::TcpListener, GatewayError> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    tokio::net::TcpListener::bind(addr).await.map_err(|e| match e.kind() {
        std::io::ErrorKind::AddrInUse => GatewayError::PortInUse(port),
        _ => GatewayError::Io(e),
    })
}

pub async fn serve(listener: tokio::net::TcpListener, client: SharedClient) -> Result<(), GatewayError> {
    axum::serve(listener, router(client)).await?;
    Ok(())
}
