//! HTTP transport: `POST /events`, `GET /poll?user_id=…`, `GET /health`.
//!
//! Bodies are line-delimited canonical frames. `POST /events` answers with
//! the reply batch of every event in the body; `/poll` drains the messages
//! pushed to a user since the last poll.

use std::future::Future;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use log::{info, warn};
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;

use crate::gateway::{encode_message_string, Gateway, GatewayError, OutboundMessage};

pub type SharedGateway = Arc<Mutex<Gateway>>;

const NDJSON: &str = "application/x-ndjson";

fn lock(gw: &SharedGateway) -> MutexGuard<'_, Gateway> {
    gw.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn frames(msgs: &[OutboundMessage]) -> String {
    let mut body = String::new();
    for m in msgs {
        match encode_message_string(m) {
            Ok(line) => {
                body.push_str(&line);
                body.push('\n');
            }
            Err(e) => warn!("dropping unencodable message: {e}"),
        }
    }
    body
}

fn ndjson(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, NDJSON)], body).into_response()
}

fn error_response(status: StatusCode, msg: String) -> Response {
    (status, Json(json!({ "error": msg }))).into_response()
}

async fn post_events(State(gw): State<SharedGateway>, body: String) -> Response {
    let mut gw = lock(&gw);
    let mut replies = Vec::new();
    for line in body.lines().filter(|l| !l.trim().is_empty()) {
        match gw.route_frame(line.as_bytes()) {
            Ok(batch) => replies.extend(batch),
            Err(e @ GatewayError::DuplicateEvent(_)) => {
                return error_response(StatusCode::CONFLICT, e.to_string())
            }
            Err(e) => return error_response(StatusCode::BAD_REQUEST, e.to_string()),
        }
    }
    if replies.is_empty() {
        return error_response(StatusCode::BAD_REQUEST, "no frames in request body".into());
    }
    ndjson(StatusCode::OK, frames(&replies))
}

#[derive(Deserialize)]
struct PollParams {
    user_id: String,
}

async fn poll(State(gw): State<SharedGateway>, Query(p): Query<PollParams>) -> Response {
    let mut gw = lock(&gw);
    if !gw.is_known(&p.user_id) {
        return error_response(StatusCode::NOT_FOUND, format!("unknown user {:?}", p.user_id));
    }
    gw.connect(&p.user_id);
    let msgs = gw.take_delivered(&p.user_id);
    ndjson(StatusCode::OK, frames(&msgs))
}

async fn health(State(gw): State<SharedGateway>) -> Response {
    let gw = lock(&gw);
    let clock = gw.orchestrator().clock();
    Json(json!({
        "status": "ok",
        "tick": clock.tick_index(),
        "now": clock.now(),
    }))
    .into_response()
}

pub fn router(gw: SharedGateway) -> Router {
    Router::new()
        .route("/events", post(post_events))
        .route("/poll", get(poll))
        .route("/health", get(health))
        .with_state(gw)
}

/// Serves until `shutdown` resolves, ticking the gateway every `tick_interval`.
pub async fn serve(
    listener: TcpListener,
    gw: SharedGateway,
    tick_interval: Duration,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let ticker_gw = gw.clone();
    let ticker = tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick_interval);
        interval.tick().await;
        loop {
            interval.tick().await;
            let out = lock(&ticker_gw).tick();
            for e in &out.errors {
                warn!("tick error: {e}");
            }
        }
    });
    if let Ok(addr) = listener.local_addr() {
        info!("listening on {addr}");
    }
    let result = axum::serve(listener, router(gw))
        .with_graceful_shutdown(shutdown)
        .await;
    ticker.abort();
    result
}
