//! Injects backend faults and shows how the executor retries, substitutes
//! or gives up.
//!
//! cargo run -p weave-core --example repair_loop

use std::sync::Arc;

use weave_core::adapters::HttpAdapter;
use weave_core::registry::default_tools;
use weave_core::{
    derive_request_spec, plan, BackendKind, Backends, CollectingSink, CostFactors, EventKind,
    Executor, ExecutorConfig, Fault, HardwareProfile, MediaType, MockAdapter, Mode, PlanId,
    Registry, Store, Tier,
};

fn attempt(label: &str, fault: Fault) {
    let mut registry = Registry::new();
    for mut t in default_tools() {
        t.backend = BackendKind::Mock;
        registry.register(t).unwrap();
    }
    let mock = Arc::new(MockAdapter::new());
    mock.inject("compose.abc", fault);
    let store = Arc::new(Store::in_memory());
    let backends = Arc::new(Backends::new(mock, Arc::new(HttpAdapter::new(None))));
    let exec = Executor::new(
        store.clone(),
        Arc::new(registry),
        backends,
        ExecutorConfig::default(),
    );

    let text = "a jig in G, 6/8 time, let me hear it";
    let spec = derive_request_spec(text, &[]).unwrap();
    let graph = plan(
        &spec,
        exec.registry(),
        Tier::Low,
        &HardwareProfile::new(4096, 16_384, 0),
        &CostFactors::default(),
    )
    .unwrap();
    let session = store.create_session(Mode::Local, None).unwrap().id;
    let source = store
        .put_artifact(text.as_bytes(), MediaType::TEXT, "user", &[])
        .unwrap();
    let sink = CollectingSink::default();
    let result = exec.execute_plan(&PlanId::fresh(), &graph, &spec, &session, &source, &sink);

    println!("== {label}");
    for e in sink
        .events()
        .iter()
        .filter(|e| matches!(e.event, EventKind::Repair | EventKind::Verdict))
    {
        println!("  {} {}", e.event.as_str(), e.payload);
    }
    match result {
        Ok(r) => println!("  finished, verdict {:?}", r.verdict.status),
        Err(e) => println!("  {e}"),
    }
}

fn main() {
    attempt("first attempt fails", Fault::fail_on([1]));
    attempt("first two attempts fail", Fault::fail_on([1, 2]));
    attempt("wrong key until told", Fault::WrongKeyUntilFeedback);
    attempt("always fails", Fault::Always);
}
