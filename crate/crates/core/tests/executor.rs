use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use proptest::prelude::*;
use weave_core::adapters::Adapter;
use weave_core::registry::default_tools;
use weave_core::{
    derive_request_spec, plan, Artifact, BackendKind, Backends, CollectingSink, CostFactors,
    EventKind, ExecError, ExecutionReport, Executor, ExecutorConfig, Fault, HardwareProfile,
    Invocation, InvocationResult, MediaType, MockAdapter, Mode, NodeRef, PlanGraph, PlanId,
    Registry, RequestSpec, SessionId, StepStatus, Store, Tier, ToolSpec,
};

const JIG: &str = "compose a jig in G, 6/8 time, and let me hear it";

struct Rig {
    exec: Executor,
    mock: Arc<MockAdapter>,
    session: SessionId,
}

fn rig_with(registry: Registry, http: Arc<dyn Adapter>, config: ExecutorConfig) -> Rig {
    let mock = Arc::new(MockAdapter::new());
    let backends = Arc::new(Backends::new(mock.clone(), http));
    let store = Arc::new(Store::in_memory());
    let session = store.create_session(Mode::Local, None).unwrap().id;
    Rig {
        exec: Executor::new(store, Arc::new(registry), backends, config),
        mock,
        session,
    }
}

fn rig(registry: Registry) -> Rig {
    rig_with(
        registry,
        Arc::new(weave_core::adapters::http::HttpAdapter::new(None)),
        ExecutorConfig::default(),
    )
}

/// Every default tool on the mock backend, so faults can hit any of them.
fn all_mock() -> Registry {
    let mut r = Registry::new();
    for mut t in default_tools() {
        t.backend = BackendKind::Mock;
        r.register(t).unwrap();
    }
    r
}

fn plan_for(rig: &Rig, spec: &RequestSpec) -> PlanGraph {
    plan(
        spec,
        rig.exec.registry(),
        Tier::Low,
        &HardwareProfile::new(4096, 16_384, 0),
        &CostFactors::default(),
    )
    .unwrap()
}

fn run(
    rig: &Rig,
    text: &str,
) -> (
    Result<ExecutionReport, ExecError>,
    Vec<weave_core::ProgressEvent>,
) {
    let spec = derive_request_spec(text, &[]).unwrap();
    run_spec(rig, &spec, text.as_bytes())
}

fn run_spec(
    rig: &Rig,
    spec: &RequestSpec,
    source: &[u8],
) -> (
    Result<ExecutionReport, ExecError>,
    Vec<weave_core::ProgressEvent>,
) {
    let p = plan_for(rig, spec);
    let store = rig.exec.store();
    let src = store
        .put_artifact(source, spec.source, "user", &[])
        .unwrap();
    let sink = CollectingSink::default();
    let r = rig
        .exec
        .execute_plan(&PlanId::fresh(), &p, spec, &rig.session, &src, &sink);
    (r, sink.events())
}

fn finals_bytes(rig: &Rig, report: &ExecutionReport) -> BTreeMap<MediaType, Vec<u8>> {
    report
        .final_artifacts
        .iter()
        .map(|(g, id)| (*g, rig.exec.store().get_artifact(id).unwrap().bytes))
        .collect()
}

/// No step_started for a node precedes the finish of each of its producers.
fn assert_topological(p: &PlanGraph, events: &[weave_core::ProgressEvent]) {
    let mut finished: HashMap<String, usize> = HashMap::new();
    for (i, e) in events.iter().enumerate() {
        let node = e
            .payload
            .get("node_id")
            .and_then(|v| v.as_str())
            .map(str::to_string);
        match e.event {
            EventKind::StepFinished | EventKind::StepCached if e.payload["status"] != "failed" => {
                finished.entry(node.unwrap()).or_insert(i);
            }
            EventKind::StepStarted | EventKind::StepCached => {
                let node = node.unwrap();
                for edge in p.incoming(&node) {
                    if let NodeRef::Node(parent) = &edge.from {
                        assert!(
                            finished.get(parent).is_some_and(|f| *f < i),
                            "{node} started before {parent} finished"
                        );
                    }
                }
            }
            _ => {}
        }
    }
}

#[test]
fn canonical_plan_runs_to_pass() {
    let rig = rig(Registry::builtin());
    let (r, events) = run(
        &rig,
        "compose a jig in G and let me hear it and show me the score",
    );
    let report = r.unwrap();
    assert_eq!(report.steps.len(), 4);
    assert!(report
        .steps
        .iter()
        .all(|s| s.status == StepStatus::Executed && s.attempt == 1));
    assert_eq!(report.final_artifacts.len(), 2);
    assert!(report.verdict.passed(), "{:?}", report.verdict);
    let kinds: Vec<_> = events.iter().map(|e| e.event).collect();
    assert_eq!(kinds.first(), Some(&EventKind::Plan));
    assert_eq!(kinds.last(), Some(&EventKind::Done));
    assert_eq!(
        kinds
            .iter()
            .filter(|k| **k == EventKind::StepFinished)
            .count(),
        4
    );
    let p: PlanGraph = serde_json::from_value(events[0].payload.clone()).unwrap();
    assert_topological(&p, &events);
    assert_eq!(report.backend_invocations, 4);
    assert_eq!(rig.mock.call_count(), 1);
}

#[test]
fn jig_end_to_end() {
    let rig = rig(Registry::builtin());
    let (r, _) = run(&rig, JIG);
    let report = r.unwrap();
    assert!(report.verdict.passed(), "{:?}", report.verdict);
    let files = finals_bytes(&rig, &report);
    let wav = weave_symbolic::WavInfo::parse(&files[&MediaType::WAV]).unwrap();
    assert_eq!((wav.sample_rate, wav.channels), (44_100, 2));
    let names: Vec<_> = report
        .verdict
        .checks
        .iter()
        .map(|c| c.name.as_str())
        .collect();
    assert!(
        names.contains(&"key_signature") && names.contains(&"meter"),
        "{names:?}"
    );
}

#[test]
fn warm_cache_makes_no_calls() {
    let rig = rig(Registry::builtin());
    let (first, _) = run(&rig, JIG);
    let first = first.unwrap();
    rig.mock.reset_counts();
    let (second, events) = run(&rig, JIG);
    let second = second.unwrap();
    assert_eq!(rig.mock.call_count(), 0);
    assert_eq!(second.backend_invocations, 0);
    assert!(second.steps.iter().all(|s| s.status == StepStatus::Cached));
    assert_eq!(finals_bytes(&rig, &first), finals_bytes(&rig, &second));
    assert!(!events.iter().any(|e| e.event == EventKind::StepStarted));
}

#[test]
fn warm_cache_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let store = Arc::new(Store::open(dir.path()).unwrap());
        let mock = Arc::new(MockAdapter::new());
        let backends = Arc::new(Backends::new(
            mock.clone(),
            Arc::new(weave_core::adapters::http::HttpAdapter::new(None)),
        ));
        let session = store.create_session(Mode::Local, None).unwrap().id;
        let exec = Executor::new(
            store,
            Arc::new(Registry::builtin()),
            backends,
            ExecutorConfig::default(),
        );
        let rig = Rig {
            exec,
            mock,
            session,
        };
        let (r, _) = run(&rig, JIG);
        let report = r.unwrap();
        outputs.push((finals_bytes(&rig, &report), rig.mock.call_count()));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    assert_eq!((outputs[0].1, outputs[1].1), (1, 0));
}

#[test]
fn identity_plan_returns_source() {
    let rig = rig(Registry::builtin());
    let spec = RequestSpec::new([MediaType::ABC], MediaType::ABC);
    let (r, events) = run_spec(&rig, &spec, b"X:1\nM:4/4\nL:1/4\nK:C\nCDEF|");
    let report = r.unwrap();
    assert!(report.steps.is_empty());
    let src = weave_core::ArtifactId::of(b"X:1\nM:4/4\nL:1/4\nK:C\nCDEF|");
    assert_eq!(report.final_artifacts[&MediaType::ABC], src);
    assert_eq!(events.first().unwrap().event, EventKind::Plan);
    assert_eq!(events.last().unwrap().event, EventKind::Done);
}

#[test]
fn first_attempt_failure_is_retried() {
    let rig = rig(Registry::builtin());
    rig.mock.inject("compose.abc", Fault::fail_on([1]));
    let (r, events) = run(&rig, JIG);
    let report = r.unwrap();
    assert!(report.verdict.passed());
    assert_eq!(
        events
            .iter()
            .filter(|e| e.event == EventKind::Repair)
            .count(),
        1
    );
    assert_eq!(report.repairs.len(), 1);
    assert_eq!(report.repairs[0].action["action"], "retry");
    let compose: Vec<_> = report
        .steps
        .iter()
        .filter(|s| s.tool_id == "compose.abc")
        .collect();
    assert_eq!(
        compose
            .iter()
            .map(|s| (s.status, s.attempt))
            .collect::<Vec<_>>(),
        [(StepStatus::Failed, 1), (StepStatus::Executed, 2)]
    );
}

#[test]
fn second_failure_substitutes_next_tool() {
    let mut registry = Registry::builtin();
    let mut alt = registry.get("compose.abc").unwrap().clone();
    alt.id = "compose.abc.alt".into();
    registry.register(alt).unwrap();
    let rig = rig(registry);
    rig.mock.inject("compose.abc", Fault::Always);
    let (r, _) = run(&rig, JIG);
    let report = r.unwrap();
    let actions: Vec<_> = report.repairs.iter().map(|r| r.action.clone()).collect();
    assert_eq!(
        actions,
        [
            serde_json::json!({ "action": "retry" }),
            serde_json::json!({ "action": "substitute", "tool_id": "compose.abc.alt" })
        ]
    );
    let last = report
        .steps
        .iter()
        .rfind(|s| s.node_id == report.steps[0].node_id)
        .unwrap();
    assert_eq!(
        (last.tool_id.as_str(), last.attempt, last.status),
        ("compose.abc.alt", 3, StepStatus::Executed)
    );
    assert!(report.verdict.passed());
}

#[test]
fn exhausted_repairs_fail_with_partial_report() {
    let rig = rig(Registry::builtin());
    rig.mock.inject("compose.abc", Fault::Always);
    let (r, events) = run(&rig, JIG);
    let Err(ExecError::Failed {
        node_id, report, ..
    }) = r
    else {
        panic!("expected failure, got {r:?}")
    };
    let compose = report.steps.iter().filter(|s| s.node_id == node_id).count();
    assert_eq!(compose, 2, "retry once, then no alternative: abort");
    assert!(report
        .steps
        .iter()
        .filter(|s| s.node_id != node_id)
        .all(|s| s.status == StepStatus::Skipped));
    assert_eq!(
        report
            .steps
            .iter()
            .filter(|s| s.status == StepStatus::Skipped)
            .count(),
        2
    );
    assert_eq!(events.last().unwrap().event, EventKind::Error);
    assert!(events.last().unwrap().payload["report"]["steps"].is_array());
    assert_eq!(rig.mock.calls_for("compose.abc"), 2);
    // the session is usable afterwards
    rig.mock.clear_faults();
    assert!(run(&rig, JIG).0.is_ok());
}

#[test]
fn garbage_output_fails_the_format_check() {
    let rig = rig(all_mock());
    rig.mock.inject("convert.abc2midi", Fault::Garbage);
    let (r, _) = run(&rig, JIG);
    let Err(ExecError::Failed { report, .. }) = r else {
        panic!("expected failure")
    };
    assert_eq!(report.repairs[0].cause["kind"], "format_check");
}

#[test]
fn failed_verdict_recomposes_once() {
    let rig = rig(Registry::builtin());
    rig.mock.inject("compose.abc", Fault::WrongKeyUntilFeedback);
    let (r, events) = run(&rig, JIG);
    let report = r.unwrap();
    let verdicts: Vec<_> = events
        .iter()
        .filter(|e| e.event == EventKind::Verdict)
        .collect();
    assert_eq!(verdicts.len(), 2);
    assert_eq!(verdicts[0].payload["status"], "fail");
    assert_eq!(verdicts[1].payload["status"], "pass");
    assert!(report.verdict.passed());
    assert_eq!(report.repairs.len(), 1);
    assert_eq!(report.repairs[0].action["action"], "recompose");
    assert_eq!(rig.mock.calls_for("compose.abc"), 2);
    // compose, convert and synth each ran twice
    assert_eq!(report.steps.len(), 6);
}

#[test]
fn verdict_fail_without_compose_is_reported_not_raised() {
    let rig = rig(Registry::builtin());
    let mut spec = RequestSpec::new([MediaType::WAV], MediaType::ABC);
    spec.constraints.key_signature = Some("G".into());
    let (r, events) = run_spec(&rig, &spec, b"X:1\nM:4/4\nL:1/4\nK:D\nDEFG|");
    let report = r.unwrap();
    assert!(!report.verdict.passed());
    assert!(report.repairs.is_empty());
    let key = report
        .verdict
        .checks
        .iter()
        .find(|c| c.name == "key_signature")
        .unwrap();
    assert!(
        !key.passed && key.detail.contains('G') && key.detail.contains('D'),
        "{}",
        key.detail
    );
    assert_eq!(
        events
            .iter()
            .filter(|e| e.event == EventKind::Verdict)
            .count(),
        1
    );
    assert_eq!(events.last().unwrap().event, EventKind::Done);
}

struct Slow;

impl Adapter for Slow {
    fn invoke(&self, tool: &ToolSpec, _: &Invocation, _: &[Artifact]) -> InvocationResult {
        std::thread::sleep(std::time::Duration::from_millis(400));
        InvocationResult::ok(b"late".to_vec(), tool.output, "slow")
    }
}

#[test]
fn slow_backends_time_out() {
    let mut registry = Registry::new();
    for mut t in default_tools() {
        if t.id == "compose.abc" {
            t.backend = BackendKind::Http;
            t.endpoint = Some("http://127.0.0.1:9/v1/invoke/compose.abc".into());
        }
        registry.register(t).unwrap();
    }
    let rig = rig_with(
        registry,
        Arc::new(Slow),
        ExecutorConfig {
            max_repair_attempts: 2,
            timeout_ms: 50,
        },
    );
    let started = std::time::Instant::now();
    let (r, _) = run(&rig, JIG);
    let Err(ExecError::Failed { report, .. }) = r else {
        panic!("expected failure")
    };
    assert!(report.repairs.iter().all(|r| r.cause["kind"] == "timeout"));
    assert!(started.elapsed() < std::time::Duration::from_millis(350));
}

#[test]
fn one_plan_per_session_at_a_time() {
    let rig = Arc::new(rig(Registry::builtin()));
    std::thread::scope(|s| {
        let hs: Vec<_> = (0..4)
            .map(|i| {
                let rig = rig.clone();
                s.spawn(move || {
                    run(
                        &rig,
                        &format!("compose a reel number {i} and let me hear it"),
                    )
                    .0
                    .is_ok()
                })
            })
            .collect();
        assert!(hs.into_iter().all(|h| h.join().unwrap()));
    });
    let turns = rig.exec.store().turns(&rig.session).unwrap();
    assert_eq!(turns.len(), 8);
}

fn fault_strategy() -> impl Strategy<Value = Option<Fault>> {
    prop_oneof![
        2 => Just(None),
        1 => proptest::collection::btree_set(1u32..4, 0..3).prop_map(|s| Some(Fault::FailOn(s))),
        1 => proptest::collection::btree_set(1u32..4, 0..3).prop_map(|s| Some(Fault::TimeoutOn(s))),
        1 => Just(Some(Fault::Always)),
        1 => Just(Some(Fault::Garbage)),
        1 => Just(Some(Fault::WrongKeyUntilFeedback)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn random_fault_injection_never_crashes(
        faults in proptest::collection::vec(fault_strategy(), 6),
        prompt in 0usize..4,
    ) {
        let rig = rig(all_mock());
        let ids: Vec<String> = default_tools().into_iter().map(|t| t.id).collect();
        for (id, f) in ids.iter().zip(&faults) {
            if let Some(f) = f {
                rig.mock.inject(id, f.clone());
            }
        }
        let text = [JIG, "write a reel in D and show me the score", "analyze a waltz in F, 3/4", "let me hear a march"][prompt];
        let (r, events) = run(&rig, text);
        prop_assert_eq!(events.first().map(|e| e.event), Some(EventKind::Plan));
        let last = events.last().map(|e| e.event);
        let report = match r {
            Ok(report) => {
                prop_assert_eq!(last, Some(EventKind::Done));
                report
            }
            Err(ExecError::Failed { report, .. }) => {
                prop_assert_eq!(last, Some(EventKind::Error));
                *report
            }
            Err(other) => return Err(TestCaseError::fail(format!("unexpected error {other}"))),
        };
        let mut per_node: HashMap<&str, u32> = HashMap::new();
        for s in report.steps.iter().filter(|s| s.status != StepStatus::Skipped && s.status != StepStatus::Cached) {
            *per_node.entry(&s.node_id).or_default() += 1;
            prop_assert!(s.attempt <= 3);
        }
        // one execution pass plus at most one recompose pass
        prop_assert!(per_node.values().all(|n| *n <= 6), "{per_node:?}");
        prop_assert_eq!(report.verdict.passed(), report.verdict.checks.iter().all(|c| c.passed));
        prop_assert_eq!(events.iter().filter(|e| e.event.is_terminal()).count(), 1);
    }
}
