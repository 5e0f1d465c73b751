//! HTTP scoring endpoint: `POST /score` with the raw image as the body.
//!
//! Success: `200 {"label", "margin", "version", "model_id", "provenance"}`.
//! Errors: `{"error": {"kind", "message"}}` with 400 (undecodable), 413
//! (over the upload cap) or 500 (internal fault).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use imgspam_core::bundle::ModelBundle;
use serde_json::json;

use crate::{runtime, score_bytes, CliError, ScoreError};

pub const DEFAULT_MAX_UPLOAD: usize = 10 * 1024 * 1024;
pub const SCORE_ROUTE: &str = "/score";

fn error(status: StatusCode, kind: &str, message: impl Into<String>) -> Response {
    let body = json!({ "error": { "kind": kind, "message": message.into() } });
    (status, Json(body)).into_response()
}

/// The scoring router over an immutable, shared bundle.
pub fn router(bundle: Arc<ModelBundle>, max_upload: usize) -> Router {
    Router::new()
        .route(SCORE_ROUTE, post(score))
        .layer(DefaultBodyLimit::max(max_upload))
        .with_state(bundle)
}

async fn score(State(bundle): State<Arc<ModelBundle>>, body: Result<Bytes, BytesRejection>) -> Response {
    let body = match body {
        Ok(b) => b,
        Err(rej) if rej.status() == StatusCode::PAYLOAD_TOO_LARGE => {
            return error(StatusCode::PAYLOAD_TOO_LARGE, "too_large", rej.body_text())
        }
        Err(rej) => return error(StatusCode::BAD_REQUEST, "bad_request", rej.body_text()),
    };
    let shared = Arc::clone(&bundle);
    let scored = tokio::task::spawn_blocking(move || score_bytes(&shared, &body)).await;
    match scored {
        Ok(Ok(s)) => Json(json!({
            "label": s.label,
            "margin": s.margin,
            "version": bundle.format_version,
            "model_id": bundle.model_id(),
            "provenance": bundle.provenance,
        }))
        .into_response(),
        Ok(Err(ScoreError::Decode(m))) => error(StatusCode::BAD_REQUEST, "decode", m),
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, "internal", format!("scoring task failed: {e}")),
    }
}

/// Binds `addr`, prints `listening on http://<addr>` and serves until
/// interrupted.
pub fn run(bundle: ModelBundle, addr: SocketAddr, max_upload: usize) -> Result<(), CliError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(runtime)?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.map_err(runtime)?;
        let local = listener.local_addr().map_err(runtime)?;
        println!("listening on http://{local}{SCORE_ROUTE}");
        use std::io::Write as _;
        let _ = std::io::stdout().flush();
        axum::serve(listener, router(Arc::new(bundle), max_upload))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(runtime)
    })
}
