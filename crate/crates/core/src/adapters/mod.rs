//! The invocation contract and its builtin, mock and HTTP backends.

pub mod builtin;
pub mod compose;
pub mod http;
pub mod mock;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::canonical::to_canonical;
use crate::media::MediaType;
use crate::policy::ToolPolicy;
use crate::registry::{BackendKind, ToolSpec};
use crate::store::{Artifact, ArtifactId};
pub use builtin::BuiltinAdapter;
pub use http::{HttpAdapter, RecordingSleeper, RetryPolicy, Sleeper, ThreadSleeper};
pub use mock::{Fault, MockAdapter};

pub const DEFAULT_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Invocation {
    pub tool_id: String,
    pub inputs: Vec<ArtifactId>,
    /// A JSON object; serialized canonically wherever it is hashed or sent.
    pub params: Value,
    pub policy: ToolPolicy,
    pub timeout_ms: u64,
    pub attempt: u32,
}

impl Invocation {
    /// Seed shared by every deterministic backend: digest over the tool,
    /// the input ids and the canonical params. Policy is left out so
    /// outputs do not depend on the tier.
    pub fn seed(&self) -> [u8; 32] {
        let doc = serde_json::json!({ "tool_id": self.tool_id, "inputs": self.inputs, "params": self.params });
        Sha256::digest(to_canonical(&doc).as_bytes()).into()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Ok,
    Failed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationResult {
    pub outcome: Outcome,
    pub output_bytes: Option<Vec<u8>>,
    pub output_meta: Option<MediaType>,
    pub backend_detail: String,
}

impl InvocationResult {
    pub fn ok(bytes: Vec<u8>, meta: MediaType, detail: impl Into<String>) -> Self {
        Self {
            outcome: Outcome::Ok,
            output_bytes: Some(bytes),
            output_meta: Some(meta),
            backend_detail: detail.into(),
        }
    }

    pub fn failed(detail: impl Into<String>) -> Self {
        Self {
            outcome: Outcome::Failed,
            output_bytes: None,
            output_meta: None,
            backend_detail: detail.into(),
        }
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        Self {
            outcome: Outcome::Timeout,
            output_bytes: None,
            output_meta: None,
            backend_detail: detail.into(),
        }
    }
}

pub trait Adapter: Send + Sync {
    /// `inputs` are the resolved artifacts named by `inv.inputs`, in order.
    fn invoke(&self, tool: &ToolSpec, inv: &Invocation, inputs: &[Artifact]) -> InvocationResult;
}

/// Routes each invocation to the adapter named by the tool's backend,
/// enforces the timeout and checks the declared output type.
pub struct Backends {
    builtin: Arc<dyn Adapter>,
    mock: Arc<MockAdapter>,
    http: Arc<dyn Adapter>,
    invocations: AtomicU64,
}

impl Backends {
    pub fn new(mock: Arc<MockAdapter>, http: Arc<dyn Adapter>) -> Self {
        Self {
            builtin: Arc::new(BuiltinAdapter),
            mock,
            http,
            invocations: AtomicU64::new(0),
        }
    }

    /// Builtin and mock backends, plus an HTTP client reading
    /// `WEAVE_API_TOKEN`.
    pub fn standard() -> Self {
        Self::new(
            Arc::new(MockAdapter::new()),
            Arc::new(HttpAdapter::from_env()),
        )
    }

    pub fn mock(&self) -> &Arc<MockAdapter> {
        &self.mock
    }

    /// Invocations routed so far, across all backends.
    pub fn invocation_count(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    pub fn invoke(
        &self,
        tool: &ToolSpec,
        inv: &Invocation,
        inputs: &[Artifact],
    ) -> InvocationResult {
        self.invocations.fetch_add(1, Ordering::SeqCst);
        let adapter: Arc<dyn Adapter> = match tool.backend {
            BackendKind::Builtin => self.builtin.clone(),
            BackendKind::Mock => self.mock.clone(),
            BackendKind::Http => self.http.clone(),
        };
        let result = run_with_timeout(adapter, tool.clone(), inv.clone(), inputs.to_vec());
        check_declared_output(tool, result)
    }
}

/// Runs the adapter on its own thread. On timeout the thread is detached
/// and its result dropped when it eventually finishes.
fn run_with_timeout(
    adapter: Arc<dyn Adapter>,
    tool: ToolSpec,
    inv: Invocation,
    inputs: Vec<Artifact>,
) -> InvocationResult {
    let timeout = Duration::from_millis(inv.timeout_ms.max(1));
    let (tx, rx) = mpsc::channel();
    let spawned = std::thread::Builder::new()
        .name(format!("invoke-{}", tool.id))
        .spawn(move || {
            let r = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
                adapter.invoke(&tool, &inv, &inputs)
            }));
            let _ = tx.send(r);
        });
    if let Err(e) = spawned {
        return InvocationResult::failed(format!("could not start invocation thread: {e}"));
    }
    match rx.recv_timeout(timeout) {
        Ok(Ok(r)) => r,
        Ok(Err(_)) => InvocationResult::failed("backend panicked"),
        Err(mpsc::RecvTimeoutError::Timeout) => {
            InvocationResult::timeout(format!("no result within {} ms", timeout.as_millis()))
        }
        Err(mpsc::RecvTimeoutError::Disconnected) => {
            InvocationResult::failed("backend thread vanished")
        }
    }
}

fn check_declared_output(tool: &ToolSpec, r: InvocationResult) -> InvocationResult {
    if r.outcome != Outcome::Ok {
        return r;
    }
    match (&r.output_bytes, r.output_meta) {
        (Some(_), Some(meta)) if meta == tool.output => r,
        (Some(_), Some(meta)) => InvocationResult::failed(format!(
            "tool {} declared {} but returned {meta}",
            tool.id, tool.output
        )),
        _ => InvocationResult::failed(format!("tool {} reported ok without output", tool.id)),
    }
}
