//! Deterministic stand-in for the model-backed tools, with fault injection.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::RwLock;

use super::{builtin, compose::compose_abc, Adapter, Invocation, InvocationResult};
use crate::media::MediaType;
use crate::registry::ToolSpec;
use crate::store::Artifact;

/// Injected misbehaviour for one tool id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Fault {
    /// Report `failed` on these attempt numbers.
    FailOn(BTreeSet<u32>),
    /// Report `timeout` on these attempt numbers.
    TimeoutOn(BTreeSet<u32>),
    /// Fail every attempt.
    Always,
    /// Compose in the wrong key until the params carry repair feedback.
    WrongKeyUntilFeedback,
    /// Return bytes that are not valid for the declared format.
    Garbage,
}

impl Fault {
    pub fn fail_on(attempts: impl IntoIterator<Item = u32>) -> Self {
        Fault::FailOn(attempts.into_iter().collect())
    }
}

#[derive(Default)]
pub struct MockAdapter {
    calls: AtomicU64,
    per_tool: RwLock<BTreeMap<String, u64>>,
    faults: RwLock<BTreeMap<String, Fault>>,
}

impl MockAdapter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inject(&self, tool_id: &str, fault: Fault) {
        self.faults.write().insert(tool_id.to_string(), fault);
    }

    pub fn clear_faults(&self) {
        self.faults.write().clear();
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn calls_for(&self, tool_id: &str) -> u64 {
        self.per_tool.read().get(tool_id).copied().unwrap_or(0)
    }

    pub fn reset_counts(&self) {
        self.calls.store(0, Ordering::SeqCst);
        self.per_tool.write().clear();
    }
}

impl Adapter for MockAdapter {
    fn invoke(&self, tool: &ToolSpec, inv: &Invocation, inputs: &[Artifact]) -> InvocationResult {
        self.calls.fetch_add(1, Ordering::SeqCst);
        *self
            .per_tool
            .write()
            .entry(inv.tool_id.clone())
            .or_default() += 1;

        let fault = self.faults.read().get(&inv.tool_id).cloned();
        let mut params = inv.params.clone();
        match &fault {
            Some(Fault::FailOn(a)) if a.contains(&inv.attempt) => {
                return InvocationResult::failed(format!(
                    "mock: injected failure on attempt {}",
                    inv.attempt
                ))
            }
            Some(Fault::TimeoutOn(a)) if a.contains(&inv.attempt) => {
                return InvocationResult::timeout(format!(
                    "mock: injected timeout on attempt {}",
                    inv.attempt
                ))
            }
            Some(Fault::Always) => {
                return InvocationResult::failed("mock: injected permanent failure")
            }
            Some(Fault::Garbage) => {
                return InvocationResult::ok(
                    b"\x00not valid output".to_vec(),
                    tool.output,
                    "mock: garbage",
                )
            }
            Some(Fault::WrongKeyUntilFeedback) if params.get("feedback").is_none() => {
                if let Some(map) = params.as_object_mut() {
                    let wrong = if map.get("key_signature").and_then(|k| k.as_str()) == Some("D") {
                        "C"
                    } else {
                        "D"
                    };
                    map.insert("key_signature".into(), wrong.into());
                }
            }
            _ => {}
        }

        let Some(input) = inputs.first() else {
            return InvocationResult::failed("mock tools need one input");
        };
        let result = if (input.media(), tool.output) == (MediaType::TEXT, MediaType::ABC) {
            let text = String::from_utf8_lossy(&input.bytes);
            compose_abc(&text, &params, inv.seed()).map(String::into_bytes)
        } else {
            builtin::run(
                input,
                tool.output,
                &Invocation {
                    params,
                    ..inv.clone()
                },
            )
        };
        match result {
            Ok(bytes) => InvocationResult::ok(bytes, tool.output, format!("mock {}", inv.tool_id)),
            Err(e) => InvocationResult::failed(format!("mock: {e}")),
        }
    }
}
