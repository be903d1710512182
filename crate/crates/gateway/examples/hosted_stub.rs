//! Runs the same request in local mode and against the hosted stand-in and
//! compares the outputs.
//!
//! cargo run -p weave-gateway --example hosted_stub

use std::sync::Arc;

use weave_core::{HardwareProfile, Mode, Registry};
use weave_gateway::stub::{self, Stub};
use weave_gateway::{Gateway, GatewayConfig};

fn run(gw: &Arc<Gateway>, mode: Mode) -> Vec<u8> {
    let session = gw.create_session(Some(mode), None).unwrap();
    let (accepted, job) = gw
        .prepare(&session.id, "a polka in A, let me hear it", &[])
        .unwrap();
    let report = job.run(&weave_core::NullSink).unwrap();
    println!(
        "{mode}: plan {} ran {} steps, {} backend calls",
        accepted.plan_id,
        report.steps.len(),
        report.backend_invocations
    );
    let wav = report.final_artifacts.values().next().unwrap();
    gw.artifact(wav).unwrap().bytes
}

fn main() {
    let remote = stub::spawn(Arc::new(Stub::new(Registry::builtin()))).unwrap();
    println!("hosted stand-in at {}", remote.url());
    let profile = HardwareProfile::new(4096, 16_384, 0);
    let local = Gateway::new(GatewayConfig {
        profile,
        ..GatewayConfig::default()
    })
    .unwrap();
    let hosted = Gateway::new(GatewayConfig {
        profile,
        hosted_url: Some(remote.url()),
        ..GatewayConfig::default()
    })
    .unwrap();
    let a = run(&local, Mode::Local);
    let b = run(&hosted, Mode::Hosted);
    println!(
        "stand-in served {} requests; outputs identical: {}",
        remote.stub.requests(),
        a == b
    );
}
