//! JSON REST binding of [`Gateway`]. Callers authenticate with the
//! `x-api-key` header.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use serde_json::json;
use tokio::sync::oneshot;

use super::service::decode;
use super::{Gateway, GatewayError, UserAccount};
use crate::events::TrackingEvent;

pub const API_KEY_HEADER: &str = "x-api-key";

type Shared = State<Arc<Gateway>>;

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(json!({ "error": error_code(&self), "message": self.to_string() }))).into_response()
    }
}

fn error_code(e: &GatewayError) -> &'static str {
    match e {
        GatewayError::Unauthenticated => "UNAUTHENTICATED",
        GatewayError::Forbidden(_) => "FORBIDDEN",
        GatewayError::NotFound(_) => "NOT_FOUND",
        GatewayError::BadRequest(_) => "BAD_REQUEST",
        GatewayError::Conflict(_) => "CONFLICT",
        GatewayError::Precondition(_) => "PRECONDITION",
        GatewayError::Unavailable(_) => "UNAVAILABLE",
        GatewayError::Timeout(_) => "TIMEOUT",
    }
}

/// Authenticates, runs `f` off the async runtime and records the call in
/// the audit log.
async fn call<T, F>(gw: Arc<Gateway>, headers: HeaderMap, action: String, created: bool, f: F) -> Response
where
    T: Serialize + Send + 'static,
    F: FnOnce(&Gateway, &UserAccount) -> Result<T, GatewayError> + Send + 'static,
{
    let key = headers.get(API_KEY_HEADER).and_then(|v| v.to_str().ok()).map(str::to_string);
    let result = tokio::task::spawn_blocking(move || {
        let user = gw.authenticate(key.as_deref())?;
        let r = f(&gw, &user);
        let status = match &r {
            Ok(_) if created => 201,
            Ok(_) => 200,
            Err(e) => e.status(),
        };
        let tx = r
            .as_ref()
            .ok()
            .and_then(|v| serde_json::to_value(v).ok())
            .and_then(|v| v.get("txId").and_then(|t| t.as_str()).map(|s| crate::ledger::TxId(s.to_string())));
        gw.record_audit(&user, &action, status, tx);
        r
    })
    .await
    .unwrap_or_else(|e| Err(GatewayError::Unavailable(format!("handler panicked: {e}"))));
    match result {
        Ok(v) if created => (StatusCode::CREATED, Json(v)).into_response(),
        Ok(v) => Json(v).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn post_edi(State(gw): Shared, Path(kind): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, format!("POST /edi/{kind}"), true, move |g, u| g.ingest_document(u, &kind, &body)).await
}

async fn get_edi(State(gw): Shared, Path((kind, id)): Path<(String, String)>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /edi/{kind}/{id}"), false, move |g, u| g.get_document(u, &kind, &id)).await
}

async fn get_shipments(State(gw): Shared, headers: HeaderMap) -> Response {
    call(gw, headers, "GET /shipments".into(), false, |g, u| g.shipments(u)).await
}

async fn post_shipment(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, "POST /shipments".into(), true, move |g, u| g.register_shipment(u, decode(&body)?)).await
}

async fn get_shipment_events(State(gw): Shared, Path((bol, c)): Path<(String, String)>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /shipments/{bol}/{c}/events"), false, move |g, u| g.shipment_events(u, &bol, &c)).await
}

async fn get_claim_advice(State(gw): Shared, Path((po, li)): Path<(String, String)>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /pos/{po}/line-items/{li}/claim-advice"), false, move |g, u| g.claim_advice(u, &po, &li)).await
}

async fn get_payment_advices(State(gw): Shared, Path((po, li)): Path<(String, String)>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /pos/{po}/line-items/{li}/payment-advices"), false, move |g, u| g.payment_advices(u, &po, &li)).await
}

async fn get_disputes(State(gw): Shared, Path((po, li)): Path<(String, String)>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /pos/{po}/line-items/{li}/disputes"), false, move |g, u| g.disputes(u, &po, &li)).await
}

async fn post_dispute(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, "POST /disputes".into(), true, move |g, u| g.raise_dispute(u, decode(&body)?)).await
}

async fn post_comment(State(gw): Shared, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, format!("POST /disputes/{id}/comments"), true, move |g, u| g.comment_dispute(u, &id, decode(&body)?)).await
}

async fn post_resolve(State(gw): Shared, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, format!("POST /disputes/{id}/resolve"), false, move |g, u| g.resolve_dispute(u, &id, decode(&body)?)).await
}

async fn post_finalize(State(gw): Shared, Path(id): Path<String>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("POST /payment-advices/{id}/finalize"), false, move |g, u| g.finalize_pa(u, &id)).await
}

async fn post_subscription(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, "POST /subscriptions".into(), true, move |g, u| g.subscribe(u, decode(&body)?)).await
}

async fn get_tx(State(gw): Shared, Path(id): Path<String>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("GET /tx/{id}"), false, move |g, u| g.tx_status(u, &id)).await
}

async fn post_events(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, "POST /events".into(), false, move |g, u| {
        let events: Vec<TrackingEvent> = decode(&body)?;
        g.ingest_events(u, events)
    })
    .await
}

async fn post_user(State(gw): Shared, headers: HeaderMap, body: Bytes) -> Response {
    call(gw, headers, "POST /users".into(), true, move |g, u| g.add_user(u, decode(&body)?)).await
}

async fn post_cron(State(gw): Shared, Path(job): Path<String>, headers: HeaderMap) -> Response {
    call(gw, headers, format!("POST /cron/{job}"), false, move |g, u| g.run_cron(u, &job)).await
}

pub fn router(gw: Arc<Gateway>) -> Router {
    Router::new()
        .route("/edi/:kind", post(post_edi))
        .route("/edi/:kind/:id", get(get_edi))
        .route("/shipments", get(get_shipments).post(post_shipment))
        .route("/shipments/:bol/:container/events", get(get_shipment_events))
        .route("/pos/:po/line-items/:li/claim-advice", get(get_claim_advice))
        .route("/pos/:po/line-items/:li/payment-advices", get(get_payment_advices))
        .route("/pos/:po/line-items/:li/disputes", get(get_disputes))
        .route("/disputes", post(post_dispute))
        .route("/disputes/:id/comments", post(post_comment))
        .route("/disputes/:id/resolve", post(post_resolve))
        .route("/payment-advices/:id/finalize", post(post_finalize))
        .route("/subscriptions", post(post_subscription))
        .route("/tx/:id", get(get_tx))
        .route("/events", post(post_events))
        .route("/users", post(post_user))
        .route("/cron/:job", post(post_cron))
        .with_state(gw)
}

pub async fn serve(gw: Arc<Gateway>, listener: tokio::net::TcpListener) -> std::io::Result<()> {
    axum::serve(listener, router(gw)).await
}

/// A server on its own runtime thread. Dropping it shuts the server down.
pub struct Server {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<()>>,
}

impl Server {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds `addr` (port 0 picks a free port) and serves in the background.
pub fn spawn(gw: Arc<Gateway>, addr: SocketAddr) -> std::io::Result<Server> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    let listener = rt.block_on(tokio::net::TcpListener::bind(addr))?;
    let addr = listener.local_addr()?;
    let (tx, rx) = oneshot::channel();
    let handle = std::thread::Builder::new().name("gateway-http".into()).spawn(move || {
        rt.block_on(async move {
            let app = router(gw);
            let shutdown = async {
                let _ = rx.await;
            };
            if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
                tracing::error!(error = %e, "gateway server stopped");
            }
        });
    })?;
    Ok(Server {
        addr,
        shutdown: Some(tx),
        handle: Some(handle),
    })
}
