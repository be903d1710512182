//! JSON-over-HTTP backend. The wire format is described in `docs/wire.md`.

use std::time::Duration;

use base64::Engine as _;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use reqwest::blocking::{multipart, Client};
use serde_json::{json, Value};

use super::{Adapter, Invocation, InvocationResult};
use crate::canonical::to_canonical;
use crate::media::MediaType;
use crate::registry::ToolSpec;
use crate::store::Artifact;

/// Inputs at or above this size travel as multipart parts.
pub const INLINE_LIMIT: usize = 1024 * 1024;
pub const OUTPUT_HEADER: &str = "x-weave-output";

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested delays without sleeping.
#[derive(Default)]
pub struct RecordingSleeper {
    delays: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.delays.lock().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.delays.lock().push(d);
    }
}

impl<T: Sleeper + ?Sized> Sleeper for std::sync::Arc<T> {
    fn sleep(&self, d: Duration) {
        (**self).sleep(d)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_tries: u32,
    pub base: Duration,
    pub factor: u32,
    /// Full jitter: each delay is drawn uniformly from `[0, nominal]`.
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_tries: 3,
            base: Duration::from_millis(500),
            factor: 2,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    /// Nominal delay after failed try `n` (1-based).
    pub fn nominal_delay(&self, n: u32) -> Duration {
        self.base * self.factor.saturating_pow(n.saturating_sub(1))
    }
}

pub struct HttpAdapter {
    client: Client,
    token: Option<String>,
    retry: RetryPolicy,
    sleeper: Box<dyn Sleeper>,
    rng: Mutex<rand::rngs::StdRng>,
}

enum Attempt {
    Done(InvocationResult),
    Retry(String),
}

impl HttpAdapter {
    pub fn new(token: Option<String>) -> Self {
        Self {
            client: Client::builder()
                .connect_timeout(Duration::from_secs(10))
                .build()
                .expect("http client"),
            token,
            retry: RetryPolicy::default(),
            sleeper: Box::new(ThreadSleeper),
            rng: Mutex::new(rand::rngs::StdRng::from_os_rng()),
        }
    }

    /// Bearer token from `WEAVE_API_TOKEN`, if set.
    pub fn from_env() -> Self {
        Self::new(
            std::env::var("WEAVE_API_TOKEN")
                .ok()
                .filter(|t| !t.is_empty()),
        )
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Sleeper + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    /// POSTs the invocation to `endpoint`, retrying transport errors and
    /// 5xx responses. 4xx fails at once; running out of tries is a timeout.
    pub fn http_invoke(
        &self,
        tool: &ToolSpec,
        inv: &Invocation,
        inputs: &[Artifact],
        endpoint: &str,
    ) -> InvocationResult {
        if let Err(e) = url::Url::parse(endpoint) {
            return InvocationResult::failed(format!("endpoint {endpoint:?} is not a URL: {e}"));
        }
        let mut last = String::new();
        for n in 1..=self.retry.max_tries.max(1) {
            match self.try_once(tool, inv, inputs, endpoint) {
                Attempt::Done(r) => return r,
                Attempt::Retry(why) => last = why,
            }
            if n < self.retry.max_tries {
                let nominal = self.retry.nominal_delay(n);
                let d = if self.retry.jitter {
                    let ms = nominal.as_millis() as u64;
                    Duration::from_millis(self.rng.lock().random_range(0..=ms))
                } else {
                    nominal
                };
                self.sleeper.sleep(d);
            }
        }
        InvocationResult::timeout(format!(
            "gave up after {} tries: {last}",
            self.retry.max_tries
        ))
    }

    fn try_once(
        &self,
        tool: &ToolSpec,
        inv: &Invocation,
        inputs: &[Artifact],
        endpoint: &str,
    ) -> Attempt {
        let mut req = self
            .client
            .post(endpoint)
            .timeout(Duration::from_millis(inv.timeout_ms.max(1)));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let body = request_body(inv, inputs);
        req = if inputs.iter().any(|a| a.bytes.len() >= INLINE_LIMIT) {
            let mut form = multipart::Form::new().part(
                "request",
                multipart::Part::text(to_canonical(&body))
                    .mime_str("application/json")
                    .expect("static mime"),
            );
            for a in inputs.iter().filter(|a| a.bytes.len() >= INLINE_LIMIT) {
                let part = multipart::Part::bytes(a.bytes.clone())
                    .file_name(a.id().to_string())
                    .mime_str("application/octet-stream")
                    .expect("static mime");
                form = form.part(a.id().to_string(), part);
            }
            req.multipart(form)
        } else {
            req.header(reqwest::header::CONTENT_TYPE, "application/json")
                .body(to_canonical(&body))
        };

        let resp = match req.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}")),
        };
        let status = resp.status();
        if status.is_server_error() {
            return Attempt::Retry(format!("server error {status}"));
        }
        if !status.is_success() {
            let text = resp.text().unwrap_or_default();
            let snippet: String = text.chars().take(200).collect();
            return Attempt::Done(InvocationResult::failed(format!(
                "http {status}: {snippet}"
            )));
        }
        let declared = resp
            .headers()
            .get(OUTPUT_HEADER)
            .map(|v| v.to_str().unwrap_or("").to_string());
        let bytes = match resp.bytes() {
            Ok(b) => b.to_vec(),
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if bytes.is_empty() {
            return Attempt::Done(InvocationResult::failed("malformed response: empty body"));
        }
        let meta = match declared {
            None => tool.output,
            Some(s) => match s.parse::<MediaType>() {
                Ok(m) => m,
                Err(e) => {
                    return Attempt::Done(InvocationResult::failed(format!(
                        "malformed {OUTPUT_HEADER}: {e}"
                    )))
                }
            },
        };
        Attempt::Done(InvocationResult::ok(
            bytes,
            meta,
            format!("http {status} from {endpoint}"),
        ))
    }
}

/// The JSON request document. Large inputs are listed with
/// `"encoding": "multipart"` and sent as a part named by their id.
pub fn request_body(inv: &Invocation, inputs: &[Artifact]) -> Value {
    let b64 = base64::engine::general_purpose::STANDARD;
    let inputs: Vec<Value> = inputs
        .iter()
        .map(|a| {
            let mut v = json!({
                "id": a.id(),
                "modality": a.meta.modality,
                "format": a.meta.format,
            });
            if a.bytes.len() >= INLINE_LIMIT {
                v["encoding"] = "multipart".into();
                v["part"] = a.id().to_string().into();
            } else {
                v["encoding"] = "base64".into();
                v["data"] = b64.encode(&a.bytes).into();
            }
            v
        })
        .collect();
    json!({
        "tool_id": inv.tool_id,
        "attempt": inv.attempt,
        "params": inv.params,
        "policy": {
            "precision": inv.policy.precision,
            "placement": inv.policy.placement,
            "attention_kernels_hint": inv.policy.attention_kernels_hint(),
        },
        "inputs": inputs,
    })
}

impl Adapter for HttpAdapter {
    fn invoke(&self, tool: &ToolSpec, inv: &Invocation, inputs: &[Artifact]) -> InvocationResult {
        match &tool.endpoint {
            Some(e) => self.http_invoke(tool, inv, inputs, e),
            None => InvocationResult::failed(format!("tool {} has no endpoint", tool.id)),
        }
    }
}
