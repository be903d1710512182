//! Plans and executes a request, printing progress events as they arrive.
//!
//! cargo run -p weave-core --example run_pipeline -- "a reel in D with a score and audio"

use std::sync::Arc;

use weave_core::{
    derive_request_spec, plan, Backends, CostFactors, Executor, ExecutorConfig, HardwareProfile,
    MediaType, Mode, PlanId, ProgressEvent, Registry, Store, Tier,
};

fn main() {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "compose a jig in G, 6/8 time, and let me hear it".into());
    let store = Arc::new(Store::in_memory());
    let exec = Executor::new(
        store.clone(),
        Arc::new(Registry::builtin()),
        Arc::new(Backends::standard()),
        ExecutorConfig::default(),
    );

    let spec = derive_request_spec(&text, &[]).unwrap();
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

    let print = |e: ProgressEvent| {
        let detail = e
            .payload
            .get("node_id")
            .or(e.payload.get("status"))
            .cloned()
            .unwrap_or_default();
        println!("{:<14} {detail}", e.event.as_str());
    };
    let report = exec
        .execute_plan(&PlanId::fresh(), &graph, &spec, &session, &source, &print)
        .unwrap();
    for (media, id) in &report.final_artifacts {
        let a = store.get_artifact(id).unwrap();
        println!("{media}: {} bytes", a.bytes.len());
    }
    for c in &report.verdict.checks {
        println!(
            "check {:<16} {}",
            c.name,
            if c.passed { "ok" } else { &c.detail }
        );
    }
}
