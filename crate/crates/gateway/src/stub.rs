//! A stand-in for the hosted backends. It speaks the HTTP wire format and
//! answers with the same deterministic implementations the local mode
//! uses, so hosted and local runs can be compared byte for byte.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use base64::Engine;
use parking_lot::Mutex;
use serde_json::Value;
use weave_core::adapters::http::OUTPUT_HEADER;
use weave_core::adapters::Adapter;
use weave_core::{
    Format, Invocation, MediaType, MockAdapter, Modality, Outcome, Placement, Precision, Registry,
    Store, ToolPolicy,
};

use crate::server::{spawn_router, ServerParts};

pub struct Stub {
    registry: Registry,
    mock: MockAdapter,
    token: Option<String>,
    requests: AtomicU64,
    /// Statuses to answer with before doing any work, consumed in order.
    script: Mutex<VecDeque<u16>>,
}

impl Stub {
    /// Serves the tools of `registry`.
    pub fn new(registry: Registry) -> Self {
        Self {
            registry,
            mock: MockAdapter::new(),
            token: None,
            requests: AtomicU64::new(0),
            script: Mutex::default(),
        }
    }

    /// Rejects requests without this bearer token.
    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    /// The adapter doing the work, for fault injection.
    pub fn mock(&self) -> &MockAdapter {
        &self.mock
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    /// The next requests get these statuses with an empty body.
    pub fn script(&self, statuses: impl IntoIterator<Item = u16>) {
        self.script.lock().extend(statuses);
    }

    fn run(
        &self,
        tool_id: &str,
        doc: &Value,
        mut parts: HashMap<String, Vec<u8>>,
    ) -> Result<(MediaType, Vec<u8>), (StatusCode, String)> {
        let bad = |m: String| (StatusCode::BAD_REQUEST, m);
        let tool = self
            .registry
            .get(tool_id)
            .ok_or((StatusCode::NOT_FOUND, format!("unknown tool {tool_id}")))?;
        let b64 = base64::engine::general_purpose::STANDARD;
        let scratch = Store::in_memory();
        let mut inputs = Vec::new();
        for (i, input) in doc["inputs"]
            .as_array()
            .ok_or_else(|| bad("inputs must be an array".into()))?
            .iter()
            .enumerate()
        {
            let field = |k: &str| {
                input[k]
                    .as_str()
                    .ok_or_else(|| bad(format!("input {i}: missing {k}")))
            };
            let modality: Modality = field("modality")?.parse().map_err(bad)?;
            let format: Format = field("format")?.parse().map_err(bad)?;
            let media = MediaType::new(modality, format)
                .ok_or_else(|| bad(format!("input {i}: illegal media")))?;
            let bytes = match field("encoding")? {
                "base64" => b64
                    .decode(field("data")?)
                    .map_err(|e| bad(format!("input {i}: {e}")))?,
                "multipart" => parts
                    .remove(field("part")?)
                    .ok_or_else(|| bad(format!("input {i}: missing part")))?,
                other => return Err(bad(format!("input {i}: unknown encoding {other:?}"))),
            };
            let id = scratch
                .put_artifact(&bytes, media, "remote", &[])
                .map_err(|e| bad(e.to_string()))?;
            if input["id"].as_str() != Some(id.as_str()) {
                return Err(bad(format!("input {i}: id does not match content")));
            }
            inputs.push(scratch.get_artifact(&id).map_err(|e| bad(e.to_string()))?);
        }
        let precision: Precision =
            serde_json::from_value(doc["policy"]["precision"].clone()).unwrap_or(Precision::Fp16);
        let placement: Placement =
            serde_json::from_value(doc["policy"]["placement"].clone()).unwrap_or(Placement::Host);
        let inv = Invocation {
            tool_id: tool_id.to_string(),
            inputs: inputs.iter().map(|a| a.id().clone()).collect(),
            params: doc
                .get("params")
                .cloned()
                .unwrap_or_else(|| Value::Object(Default::default())),
            policy: ToolPolicy {
                precision,
                placement,
                lazy_load: false,
                offload_cache: false,
                max_parallel: 1,
                batch_budget_mb: 1,
            },
            timeout_ms: weave_core::adapters::DEFAULT_TIMEOUT_MS,
            attempt: doc["attempt"].as_u64().unwrap_or(1) as u32,
        };
        // every builtin signature is also served by the mock adapter
        let r = self.mock.invoke(tool, &inv, &inputs);
        match (r.outcome, r.output_bytes, r.output_meta) {
            (Outcome::Ok, Some(bytes), Some(meta)) => Ok((meta, bytes)),
            (Outcome::Timeout, ..) => Err((StatusCode::GATEWAY_TIMEOUT, r.backend_detail)),
            _ => Err((StatusCode::UNPROCESSABLE_ENTITY, r.backend_detail)),
        }
    }
}

pub fn router(stub: Arc<Stub>) -> Router {
    Router::new()
        .route("/v1/invoke/{tool_id}", post(invoke))
        .layer(DefaultBodyLimit::max(crate::server::MAX_BODY))
        .with_state(stub)
}

async fn invoke(
    State(stub): State<Arc<Stub>>,
    Path(tool_id): Path<String>,
    req: Request,
) -> Response {
    stub.requests.fetch_add(1, Ordering::SeqCst);
    if let Some(code) = stub.script.lock().pop_front() {
        return StatusCode::from_u16(code)
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
            .into_response();
    }
    if let Some(t) = &stub.token {
        let auth = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok());
        if auth != Some(format!("Bearer {t}").as_str()) {
            return (StatusCode::UNAUTHORIZED, "missing or wrong bearer token").into_response();
        }
    }
    let (doc, parts) = match read_request(req).await {
        Ok(x) => x,
        Err(m) => return (StatusCode::BAD_REQUEST, m).into_response(),
    };
    let result = tokio::task::spawn_blocking(move || stub.run(&tool_id, &doc, parts)).await;
    match result {
        Ok(Ok((meta, bytes))) => {
            let mut resp = (StatusCode::OK, bytes).into_response();
            let h = resp.headers_mut();
            h.insert(
                header::CONTENT_TYPE,
                HeaderValue::from_static(meta.format.content_type()),
            );
            if let Ok(v) = HeaderValue::from_str(&meta.to_string()) {
                h.insert(OUTPUT_HEADER, v);
            }
            resp
        }
        Ok(Err((status, msg))) => (status, msg).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

async fn read_request(req: Request) -> Result<(Value, HashMap<String, Vec<u8>>), String> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("multipart/form-data"));
    if !is_multipart {
        let body = axum::body::to_bytes(req.into_body(), usize::MAX)
            .await
            .map_err(|e| e.to_string())?;
        let doc = serde_json::from_slice(&body).map_err(|e| format!("malformed request: {e}"))?;
        return Ok((doc, HashMap::new()));
    }
    let mut mp = Multipart::from_request(req, &())
        .await
        .map_err(|e| e.to_string())?;
    let mut doc = None;
    let mut parts = HashMap::new();
    while let Some(field) = mp.next_field().await.map_err(|e| e.to_string())? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| e.to_string())?;
        if name == "request" {
            doc = Some(
                serde_json::from_slice(&bytes)
                    .map_err(|e| format!("malformed request part: {e}"))?,
            );
        } else {
            parts.insert(name, bytes.to_vec());
        }
    }
    Ok((doc.ok_or("multipart body has no request part")?, parts))
}

/// A stub server on a background thread; stops when dropped.
pub struct StubServer {
    pub addr: SocketAddr,
    pub stub: Arc<Stub>,
    parts: Option<ServerParts>,
}

impl StubServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(p) = self.parts.take() {
            let _ = p.shutdown.send(());
            let _ = p.thread.join();
        }
    }
}

/// Serves `stub` on `127.0.0.1` at a free port.
pub fn spawn(stub: Arc<Stub>) -> std::io::Result<StubServer> {
    let (addr, parts) = spawn_router(router(stub.clone()), SocketAddr::from(([127, 0, 0, 1], 0)))?;
    Ok(StubServer {
        addr,
        stub,
        parts: Some(parts),
    })
}
