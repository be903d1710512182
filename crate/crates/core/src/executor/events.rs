use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::store::PlanId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Plan,
    StepStarted,
    StepCached,
    StepFinished,
    Verdict,
    Repair,
    Done,
    Error,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Plan => "plan",
            EventKind::StepStarted => "step_started",
            EventKind::StepCached => "step_cached",
            EventKind::StepFinished => "step_finished",
            EventKind::Verdict => "verdict",
            EventKind::Repair => "repair",
            EventKind::Done => "done",
            EventKind::Error => "error",
        }
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, EventKind::Done | EventKind::Error)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressEvent {
    pub event: EventKind,
    pub plan_id: PlanId,
    pub payload: Value,
}

pub trait EventSink: Send + Sync {
    fn emit(&self, event: ProgressEvent);
}

impl<F: Fn(ProgressEvent) + Send + Sync> EventSink for F {
    fn emit(&self, event: ProgressEvent) {
        self(event)
    }
}

/// Discards everything.
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _: ProgressEvent) {}
}

/// Keeps every event, for tests and one-shot runs.
#[derive(Default)]
pub struct CollectingSink {
    events: parking_lot::Mutex<Vec<ProgressEvent>>,
}

impl CollectingSink {
    pub fn events(&self) -> Vec<ProgressEvent> {
        self.events.lock().clone()
    }

    pub fn kinds(&self) -> Vec<EventKind> {
        self.events.lock().iter().map(|e| e.event).collect()
    }
}

impl EventSink for CollectingSink {
    fn emit(&self, event: ProgressEvent) {
        self.events.lock().push(event);
    }
}
