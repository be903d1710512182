//! HTTP routes and the SSE event stream.

use std::convert::Infallible;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use base64::Engine;
use futures::stream::{self, Stream, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast::error::RecvError;
use weave_core::{
    to_canonical, ArtifactId, Format, MediaType, Modality, Mode, PlanId, SessionId, Tier,
};

use crate::hub::Frame;
use crate::service::{Attachment, Gateway, GatewayError};

/// Request bodies carry base64 attachments.
pub const MAX_BODY: usize = 256 * 1024 * 1024;

pub fn router(gateway: Arc<Gateway>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}/messages", post(post_message))
        .route("/v1/sessions/{id}/events", get(events))
        .route("/v1/artifacts/{id}", get(artifact))
        .route("/v1/plans/{id}", get(plan_status))
        .route("/v1/tools", get(tools))
        .route("/v1/health", get(health))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(gateway)
}

/// Canonical JSON body with the given status.
pub fn canonical_response(status: StatusCode, value: &Value) -> Response {
    (
        status,
        [(header::CONTENT_TYPE, "application/json")],
        to_canonical(value),
    )
        .into_response()
}

impl GatewayError {
    pub fn status(&self) -> StatusCode {
        match self {
            GatewayError::NotFound(_) => StatusCode::NOT_FOUND,
            GatewayError::Validation(_) => StatusCode::BAD_REQUEST,
            GatewayError::Unplannable { .. } | GatewayError::Capacity(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            GatewayError::Conflict(_) => StatusCode::CONFLICT,
            GatewayError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        canonical_response(self.status(), &self.to_json())
    }
}

fn parse_body<T: for<'de> Deserialize<'de> + Default>(body: &Bytes) -> Result<T, GatewayError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body)
        .map_err(|e| GatewayError::Validation(format!("malformed JSON body: {e}")))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    mode: Option<Mode>,
    tier: Option<Tier>,
}

async fn create_session(
    State(gw): State<Arc<Gateway>>,
    body: Bytes,
) -> Result<Response, GatewayError> {
    let req: NewSession = parse_body(&body)?;
    let s = gw.create_session(req.mode, req.tier)?;
    let tier = s.tier_override.unwrap_or(gw.tier());
    Ok(canonical_response(
        StatusCode::CREATED,
        &json!({ "session_id": s.id, "mode": s.mode, "tier": tier, "created_at": s.created_at }),
    ))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireAttachment {
    modality: Modality,
    format: Format,
    /// Base64.
    data: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewMessage {
    #[serde(default)]
    text: String,
    #[serde(default)]
    attachments: Vec<WireAttachment>,
}

async fn post_message(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, GatewayError> {
    let req: NewMessage = parse_body(&body)?;
    let b64 = base64::engine::general_purpose::STANDARD;
    let mut attachments = Vec::with_capacity(req.attachments.len());
    for (i, a) in req.attachments.into_iter().enumerate() {
        let media = MediaType::new(a.modality, a.format).ok_or_else(|| {
            GatewayError::Validation(format!("attachment {i}: illegal modality/format pair"))
        })?;
        let bytes = b64
            .decode(a.data.as_bytes())
            .map_err(|e| GatewayError::Validation(format!("attachment {i}: {e}")))?;
        attachments.push(Attachment { media, bytes });
    }
    // planning is quick but touches the store; keep it off the reactor
    let accepted =
        tokio::task::spawn_blocking(move || gw.submit(&SessionId(id), &req.text, &attachments))
            .await
            .map_err(|e| GatewayError::Internal(e.to_string()))??;
    let value =
        serde_json::to_value(&accepted).map_err(|e| GatewayError::Internal(e.to_string()))?;
    Ok(canonical_response(StatusCode::ACCEPTED, &value))
}

fn frame_event(f: &Frame) -> Event {
    Event::default()
        .id(f.seq.to_string())
        .event(f.event.event.as_str())
        .data(to_canonical(&f.event))
}

fn dropped_event(count: u64) -> Event {
    Event::default()
        .event("dropped")
        .data(to_canonical(&json!({ "dropped": count })))
}

async fn events(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, GatewayError> {
    let sub = gw.subscribe(&SessionId(id.clone()))?;
    let hub = gw.hub(&SessionId(id))?;
    let mut head = Vec::new();
    if sub.truncated {
        head.push(dropped_event(hub.dropped()));
    }
    head.extend(sub.replay.iter().map(frame_event));
    let live = stream::unfold(sub.live, |mut rx| async move {
        match rx.recv().await {
            Ok(f) => Some((frame_event(&f), rx)),
            Err(RecvError::Lagged(n)) => Some((dropped_event(n), rx)),
            Err(RecvError::Closed) => None,
        }
    });
    let all = stream::iter(head).chain(live).map(Ok);
    Ok(Sse::new(all).keep_alive(KeepAlive::default()))
}

async fn artifact(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> Result<Response, GatewayError> {
    let id = ArtifactId(id);
    let a = tokio::task::spawn_blocking(move || gw.artifact(&id))
        .await
        .map_err(|e| GatewayError::Internal(e.to_string()))??;
    let media = a.media();
    let mut resp = (StatusCode::OK, a.bytes).into_response();
    let h = resp.headers_mut();
    h.insert(
        header::CONTENT_TYPE,
        HeaderValue::from_static(media.format.content_type()),
    );
    if let Ok(v) = HeaderValue::from_str(&media.to_string()) {
        h.insert("x-weave-media", v);
    }
    if let Ok(v) = HeaderValue::from_str(&format!("\"{}\"", a.meta.id)) {
        h.insert(header::ETAG, v);
    }
    Ok(resp)
}

async fn plan_status(
    State(gw): State<Arc<Gateway>>,
    Path(id): Path<String>,
) -> Result<Response, GatewayError> {
    let entry = gw.plan_entry(&PlanId(id))?;
    let value = serde_json::to_value(&entry).map_err(|e| GatewayError::Internal(e.to_string()))?;
    Ok(canonical_response(StatusCode::OK, &value))
}

async fn tools(State(gw): State<Arc<Gateway>>) -> Response {
    canonical_response(
        StatusCode::OK,
        &json!({ "mode": gw.config().mode, "tools": gw.tools() }),
    )
}

async fn health(State(gw): State<Arc<Gateway>>) -> Response {
    canonical_response(StatusCode::OK, &gw.health())
}

/// A server running on its own runtime thread. Dropping it shuts the
/// server down.
pub struct ServerHandle {
    pub addr: SocketAddr,
    pub gateway: Arc<Gateway>,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl ServerHandle {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds `addr` (port 0 picks a free port) and serves `router` on a
/// background thread.
pub fn spawn_router(
    router: Router,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, ServerParts)> {
    let listener = std::net::TcpListener::bind(addr)?;
    listener.set_nonblocking(true)?;
    let bound = listener.local_addr()?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::Builder::new()
        .name(format!("http-{bound}"))
        .spawn(move || {
            let rt = tokio::runtime::Builder::new_multi_thread()
                .worker_threads(2)
                .enable_all()
                .build()
                .expect("runtime");
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                // open SSE streams would hold a graceful shutdown forever
                tokio::select! {
                    _ = axum::serve(listener, router) => {}
                    _ = rx => {}
                }
            });
            rt.shutdown_background();
        })?;
    Ok((
        bound,
        ServerParts {
            shutdown: tx,
            thread,
        },
    ))
}

pub struct ServerParts {
    pub shutdown: tokio::sync::oneshot::Sender<()>,
    pub thread: std::thread::JoinHandle<()>,
}

/// Serves the gateway API on a background thread.
pub fn spawn(gateway: Arc<Gateway>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
    let (addr, parts) = spawn_router(router(gateway.clone()), addr)?;
    Ok(ServerHandle {
        addr,
        gateway,
        shutdown: Some(parts.shutdown),
        thread: Some(parts.thread),
    })
}
