//! Runs plan graphs: memoized steps in topological waves, critique of the
//! sinks, and bounded repair.

mod critique;
mod events;
mod repair;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::adapters::{Backends, Invocation, Outcome, DEFAULT_TIMEOUT_MS};
use crate::media::MediaType;
use crate::planner::{topological_order, validate_plan, NodeRef, PlanGraph, PlanNode, RequestSpec};
use crate::registry::{Registry, ToolKind};
use crate::store::{ArtifactId, MemoKey, PlanId, Role, SessionId, Store, StoreError};
pub use critique::{critique, format_check, Check, Verdict, VerdictStatus};
pub use events::{CollectingSink, EventKind, EventSink, NullSink, ProgressEvent};
pub use repair::{repair, repair_from, FailureCause, RepairAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    Cached,
    Executed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub node_id: String,
    pub tool_id: String,
    pub status: StepStatus,
    pub output: Option<ArtifactId>,
    pub duration_ms: u64,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairRecord {
    pub node_id: String,
    pub tool_id: String,
    pub attempt: u32,
    pub cause: Value,
    pub action: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub plan_id: PlanId,
    pub steps: Vec<StepRecord>,
    pub repairs: Vec<RepairRecord>,
    pub verdict: Verdict,
    pub final_artifacts: BTreeMap<MediaType, ArtifactId>,
    pub backend_invocations: u64,
}

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("execution failed at {node_id}: {detail}")]
    Failed {
        node_id: String,
        detail: String,
        report: Box<ExecutionReport>,
    },
    #[error("invalid plan: {}", .0.join("; "))]
    InvalidPlan(Vec<String>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub max_repair_attempts: u32,
    pub timeout_ms: u64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            max_repair_attempts: 2,
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

pub struct Executor {
    store: Arc<Store>,
    registry: Arc<Registry>,
    backends: Arc<Backends>,
    config: ExecutorConfig,
    session_locks: Mutex<HashMap<SessionId, Arc<Mutex<()>>>>,
}

/// Per-run state shared by the node workers of one plan.
struct Run<'a> {
    plan_id: &'a PlanId,
    plan: &'a PlanGraph,
    session: &'a SessionId,
    sink: &'a dyn EventSink,
    invocations: AtomicU64,
    steps: Mutex<Vec<StepRecord>>,
    repairs: Mutex<Vec<RepairRecord>>,
}

impl Run<'_> {
    fn emit(&self, event: EventKind, payload: Value) {
        self.sink.emit(ProgressEvent {
            event,
            plan_id: self.plan_id.clone(),
            payload,
        });
    }

    fn record(&self, step: StepRecord) {
        self.steps.lock().push(step);
    }
}

impl Executor {
    pub fn new(
        store: Arc<Store>,
        registry: Arc<Registry>,
        backends: Arc<Backends>,
        config: ExecutorConfig,
    ) -> Self {
        Self {
            store,
            registry,
            backends,
            config,
            session_locks: Mutex::new(HashMap::new()),
        }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    pub fn backends(&self) -> &Arc<Backends> {
        &self.backends
    }

    fn session_lock(&self, session: &SessionId) -> Arc<Mutex<()>> {
        self.session_locks
            .lock()
            .entry(session.clone())
            .or_default()
            .clone()
    }

    /// Executes `plan` for `session` starting from `source`. Plans of one
    /// session run one at a time. The first event is `plan`; the last is
    /// `done` or `error`.
    pub fn execute_plan(
        &self,
        plan_id: &PlanId,
        plan: &PlanGraph,
        spec: &RequestSpec,
        session: &SessionId,
        source: &ArtifactId,
        sink: &dyn EventSink,
    ) -> Result<ExecutionReport, ExecError> {
        let lock = self.session_lock(session);
        let _serial = lock.lock();
        let run = Run {
            plan_id,
            plan,
            session,
            sink,
            invocations: AtomicU64::new(0),
            steps: Mutex::new(Vec::new()),
            repairs: Mutex::new(Vec::new()),
        };
        run.emit(
            EventKind::Plan,
            serde_json::to_value(plan).expect("plan serializes"),
        );

        let result = self.execute_inner(&run, spec, source);
        if let Err(e) = &result {
            let payload = match e {
                ExecError::Failed {
                    node_id,
                    detail,
                    report,
                } => {
                    json!({ "node_id": node_id, "detail": detail, "report": report })
                }
                other => json!({ "detail": other.to_string() }),
            };
            run.emit(EventKind::Error, payload);
            let _ = self
                .store
                .append_turn(session, Role::System, &e.to_string(), &[]);
        }
        let _ = self.store.end_plan(session, plan_id);
        result
    }

    fn execute_inner(
        &self,
        run: &Run,
        spec: &RequestSpec,
        source: &ArtifactId,
    ) -> Result<ExecutionReport, ExecError> {
        self.store.session(run.session)?;
        let diagnostics = validate_plan(run.plan, &self.registry);
        if !diagnostics.is_empty() {
            return Err(ExecError::InvalidPlan(diagnostics));
        }
        let source_meta = self.store.artifact_meta(source)?;
        if source_meta.media() != run.plan.source {
            return Err(ExecError::InvalidPlan(vec![format!(
                "source artifact is {} but the plan starts from {}",
                source_meta.media(),
                run.plan.source
            )]));
        }
        self.store.begin_plan(run.session, run.plan_id)?;
        self.store.pin_for_plan(run.session, run.plan_id, source)?;

        let base = spec.constraints.to_params();
        let order = topological_order(run.plan);
        let mut outputs: HashMap<NodeRef, ArtifactId> =
            HashMap::from([(NodeRef::Source, source.clone())]);
        self.run_nodes(run, &order, &mut outputs, &HashMap::new(), &base)?;

        let mut finals = final_artifacts(run.plan, &outputs);
        let mut verdict = critique(&self.store, &finals, spec)?;
        run.emit(
            EventKind::Verdict,
            serde_json::to_value(&verdict).expect("verdict serializes"),
        );

        let compose: Vec<String> = run
            .plan
            .nodes
            .iter()
            .filter(|n| {
                self.registry
                    .get(&n.tool_id)
                    .is_some_and(|t| t.kind == ToolKind::Compose)
            })
            .map(|n| n.node_id.clone())
            .collect();
        if !verdict.passed() && !compose.is_empty() {
            let feedback = verdict.failure_summary();
            for node in &compose {
                let rec = RepairRecord {
                    node_id: node.clone(),
                    tool_id: run
                        .plan
                        .node(node)
                        .map(|n| n.tool_id.clone())
                        .unwrap_or_default(),
                    attempt: 1,
                    cause: json!({ "kind": "verdict", "detail": feedback }),
                    action: json!({ "action": "recompose" }),
                };
                run.emit(
                    EventKind::Repair,
                    serde_json::to_value(&rec).expect("record serializes"),
                );
                run.repairs.lock().push(rec);
            }
            let mut with_feedback = base.clone();
            if let Some(map) = with_feedback.as_object_mut() {
                map.insert("feedback".into(), feedback.into());
            }
            let overrides: HashMap<String, Value> = compose
                .iter()
                .map(|n| (n.clone(), with_feedback.clone()))
                .collect();
            let rerun = descendants(run.plan, &compose, &order);
            self.run_nodes(run, &rerun, &mut outputs, &overrides, &base)?;
            finals = final_artifacts(run.plan, &outputs);
            verdict = critique(&self.store, &finals, spec)?;
            run.emit(
                EventKind::Verdict,
                serde_json::to_value(&verdict).expect("verdict serializes"),
            );
        }

        let report = ExecutionReport {
            plan_id: run.plan_id.clone(),
            steps: run.steps.lock().clone(),
            repairs: run.repairs.lock().clone(),
            verdict,
            final_artifacts: finals,
            backend_invocations: run.invocations.load(Ordering::SeqCst),
        };
        let mut attachments: Vec<ArtifactId> = report.final_artifacts.values().cloned().collect();
        attachments.dedup();
        let summary = format!(
            "plan {} finished: {} steps",
            run.plan_id,
            report.steps.len()
        );
        self.store
            .append_turn(run.session, Role::Tool, &summary, &attachments)?;
        let verdict_text = crate::canonical::to_canonical(&report.verdict);
        self.store
            .append_turn(run.session, Role::Verdict, &verdict_text, &[])?;
        run.emit(
            EventKind::Done,
            json!({ "final_artifacts": report.final_artifacts, "verdict": report.verdict.status }),
        );
        Ok(report)
    }

    /// Runs `nodes` (a topologically ordered subset) in waves of ready
    /// nodes, at most `min(max_parallel)` at a time.
    fn run_nodes(
        &self,
        run: &Run,
        nodes: &[String],
        outputs: &mut HashMap<NodeRef, ArtifactId>,
        overrides: &HashMap<String, Value>,
        base: &Value,
    ) -> Result<(), ExecError> {
        let limit = run
            .plan
            .nodes
            .iter()
            .map(|n| n.policy.max_parallel)
            .min()
            .unwrap_or(1)
            .max(1) as usize;
        let mut pending: Vec<&String> = nodes.iter().collect();
        let mut fresh: HashSet<&str> = HashSet::new();
        while !pending.is_empty() {
            let ready: Vec<&String> = pending
                .iter()
                .copied()
                .filter(|id| {
                    run.plan.incoming(id).all(|e| match &e.from {
                        NodeRef::Source => true,
                        NodeRef::Node(p) => !nodes.contains(p) || fresh.contains(p.as_str()),
                    })
                })
                .collect();
            if ready.is_empty() {
                return Err(ExecError::InvalidPlan(vec![
                    "plan has nodes that can never become ready".into(),
                ]));
            }
            for chunk in ready.chunks(limit) {
                let results: Vec<(String, Result<ArtifactId, String>)> = std::thread::scope(|s| {
                    let handles: Vec<_> = chunk
                        .iter()
                        .map(|id| {
                            let node = run.plan.node(id).expect("validated plan");
                            let edge = run.plan.incoming(id).next().expect("validated plan");
                            let input = outputs[&edge.from].clone();
                            let params = overrides.get(*id).unwrap_or(base).clone();
                            s.spawn(move || self.run_node(run, node, &input, &params))
                        })
                        .collect();
                    chunk
                        .iter()
                        .zip(handles)
                        .map(|(id, h)| {
                            let r = h
                                .join()
                                .unwrap_or_else(|_| Err("node worker panicked".to_string()));
                            ((*id).clone(), r)
                        })
                        .collect()
                });
                let mut failure = None;
                for (id, r) in results {
                    match r {
                        Ok(a) => {
                            outputs.insert(NodeRef::Node(id.clone()), a);
                        }
                        Err(detail) => failure = failure.or(Some((id, detail))),
                    }
                }
                if let Some((node_id, detail)) = failure {
                    for rest in nodes {
                        let done = run
                            .steps
                            .lock()
                            .iter()
                            .any(|s| &s.node_id == rest && s.status != StepStatus::Failed);
                        let failed_here = *rest == node_id;
                        if !done && !failed_here && !chunk.contains(&rest) {
                            let tool_id = run
                                .plan
                                .node(rest)
                                .map(|n| n.tool_id.clone())
                                .unwrap_or_default();
                            run.record(StepRecord {
                                node_id: rest.clone(),
                                tool_id,
                                status: StepStatus::Skipped,
                                output: None,
                                duration_ms: 0,
                                attempt: 0,
                            });
                        }
                    }
                    let report = ExecutionReport {
                        plan_id: run.plan_id.clone(),
                        steps: run.steps.lock().clone(),
                        repairs: run.repairs.lock().clone(),
                        verdict: Verdict::from_checks(vec![Check {
                            name: "execution".into(),
                            passed: false,
                            detail: format!("{node_id}: {detail}"),
                        }]),
                        final_artifacts: final_artifacts(run.plan, outputs),
                        backend_invocations: run.invocations.load(Ordering::SeqCst),
                    };
                    return Err(ExecError::Failed {
                        node_id,
                        detail,
                        report: Box::new(report),
                    });
                }
                for id in chunk {
                    fresh.insert(id.as_str());
                }
            }
            pending.retain(|id| !fresh.contains(id.as_str()));
        }
        Ok(())
    }

    /// One node with its repair loop. Returns the output id or the last
    /// failure detail once repair aborts.
    fn run_node(
        &self,
        run: &Run,
        node: &PlanNode,
        input: &ArtifactId,
        params: &Value,
    ) -> Result<ArtifactId, String> {
        let mut tool_id = node.tool_id.clone();
        let mut attempt = 1;
        loop {
            let Some(tool) = self.registry.get(&tool_id) else {
                return Err(format!("tool {tool_id} is not registered"));
            };
            let key = MemoKey::new(&tool_id, std::slice::from_ref(input), params, &node.policy);
            if let Some(hit) = self.store.memo_lookup(&key) {
                if self
                    .store
                    .artifact_meta(&hit)
                    .is_ok_and(|m| m.media() == tool.output)
                {
                    let _ = self.store.pin_for_plan(run.session, run.plan_id, &hit);
                    let step = StepRecord {
                        node_id: node.node_id.clone(),
                        tool_id: tool_id.clone(),
                        status: StepStatus::Cached,
                        output: Some(hit.clone()),
                        duration_ms: 0,
                        attempt,
                    };
                    run.emit(
                        EventKind::StepCached,
                        serde_json::to_value(&step).expect("step serializes"),
                    );
                    run.record(step);
                    return Ok(hit);
                }
            }

            run.emit(
                EventKind::StepStarted,
                json!({ "node_id": node.node_id, "tool_id": tool_id, "attempt": attempt }),
            );
            let started = Instant::now();
            let inv = Invocation {
                tool_id: tool_id.clone(),
                inputs: vec![input.clone()],
                params: params.clone(),
                policy: node.policy,
                timeout_ms: self.config.timeout_ms,
                attempt,
            };
            let outcome = match self.store.get_artifact(input) {
                Ok(artifact) => {
                    run.invocations.fetch_add(1, Ordering::SeqCst);
                    let r = self.backends.invoke(tool, &inv, &[artifact]);
                    match (r.outcome, r.output_bytes) {
                        (Outcome::Ok, Some(bytes)) => match format_check(&bytes, tool.output) {
                            Ok(()) => self
                                .store
                                .put_artifact(
                                    &bytes,
                                    tool.output,
                                    &tool_id,
                                    std::slice::from_ref(input),
                                )
                                .map_err(|e| FailureCause::Failed(format!("storing output: {e}"))),
                            Err(e) => Err(FailureCause::FormatCheck(e)),
                        },
                        (Outcome::Timeout, _) => Err(FailureCause::Timeout(r.backend_detail)),
                        _ => Err(FailureCause::Failed(r.backend_detail)),
                    }
                }
                Err(e) => Err(FailureCause::Failed(format!("reading input {input}: {e}"))),
            };
            let duration_ms = started.elapsed().as_millis() as u64;

            match outcome {
                Ok(id) => {
                    if let Err(e) = self.store.memo_record(key, &id) {
                        tracing::warn!(node = %node.node_id, error = %e, "memo record failed");
                    }
                    let _ = self.store.pin_for_plan(run.session, run.plan_id, &id);
                    let step = StepRecord {
                        node_id: node.node_id.clone(),
                        tool_id: tool_id.clone(),
                        status: StepStatus::Executed,
                        output: Some(id.clone()),
                        duration_ms,
                        attempt,
                    };
                    run.emit(
                        EventKind::StepFinished,
                        serde_json::to_value(&step).expect("step serializes"),
                    );
                    run.record(step);
                    return Ok(id);
                }
                Err(cause) => {
                    let step = StepRecord {
                        node_id: node.node_id.clone(),
                        tool_id: tool_id.clone(),
                        status: StepStatus::Failed,
                        output: None,
                        duration_ms,
                        attempt,
                    };
                    run.emit(
                        EventKind::StepFinished,
                        serde_json::to_value(&step).expect("step serializes"),
                    );
                    run.record(step);
                    let action = repair_from(
                        run.plan,
                        &node.node_id,
                        &tool_id,
                        &cause,
                        attempt,
                        &self.registry,
                        self.config.max_repair_attempts,
                    );
                    let rec = RepairRecord {
                        node_id: node.node_id.clone(),
                        tool_id: tool_id.clone(),
                        attempt,
                        cause: serde_json::to_value(&cause).expect("cause serializes"),
                        action: serde_json::to_value(&action).expect("action serializes"),
                    };
                    tracing::debug!(node = %node.node_id, ?action, "repair");
                    run.emit(
                        EventKind::Repair,
                        serde_json::to_value(&rec).expect("record serializes"),
                    );
                    run.repairs.lock().push(rec);
                    match action {
                        RepairAction::Retry => {}
                        RepairAction::Substitute(alt) => tool_id = alt,
                        RepairAction::Abort => return Err(cause.detail().to_string()),
                    }
                    attempt += 1;
                }
            }
        }
    }
}

fn final_artifacts(
    plan: &PlanGraph,
    outputs: &HashMap<NodeRef, ArtifactId>,
) -> BTreeMap<MediaType, ArtifactId> {
    plan.sinks
        .iter()
        .filter_map(|(g, n)| outputs.get(n).map(|a| (*g, a.clone())))
        .collect()
}

/// `roots` and everything downstream of them, in `order`.
fn descendants(plan: &PlanGraph, roots: &[String], order: &[String]) -> Vec<String> {
    let mut set: HashSet<String> = roots.iter().cloned().collect();
    for id in order {
        if plan
            .incoming(id)
            .any(|e| matches!(&e.from, NodeRef::Node(p) if set.contains(p)))
        {
            set.insert(id.clone());
        }
    }
    order
        .iter()
        .filter(|id| set.contains(*id))
        .cloned()
        .collect()
}
