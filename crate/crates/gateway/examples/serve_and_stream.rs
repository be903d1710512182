//! Starts the gateway on a free port, sends one message and prints the
//! server-sent events until the plan finishes.
//!
//! cargo run -p weave-gateway --example serve_and_stream

use std::io::{BufRead, BufReader};

use serde_json::{json, Value};
use weave_core::HardwareProfile;
use weave_gateway::{server, Gateway, GatewayConfig};

fn main() {
    let gw = Gateway::new(GatewayConfig {
        profile: HardwareProfile::new(4096, 16_384, 0),
        ..GatewayConfig::default()
    })
    .unwrap();
    let srv = server::spawn(gw, "127.0.0.1:0".parse().unwrap()).unwrap();
    let url = srv.url();
    println!("gateway at {url}");

    let http = reqwest::blocking::Client::new();
    let session: Value = http
        .post(format!("{url}/v1/sessions"))
        .json(&json!({}))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = session["session_id"].as_str().unwrap().to_string();
    let events = http
        .get(format!("{url}/v1/sessions/{id}/events"))
        .send()
        .unwrap();

    let text = "a reel in D with a score and audio";
    let accepted: Value = http
        .post(format!("{url}/v1/sessions/{id}/messages"))
        .json(&json!({ "text": text }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    println!(
        "plan {} with {} nodes",
        accepted["plan_id"],
        accepted["plan"]["nodes"].as_array().unwrap().len()
    );

    for line in BufReader::new(events).lines() {
        let line = line.unwrap();
        if let Some(kind) = line.strip_prefix("event: ") {
            print!("{kind:<14}");
        } else if let Some(data) = line.strip_prefix("data: ") {
            let v: Value = serde_json::from_str(data).unwrap();
            let p = &v["payload"];
            println!(
                "{}",
                p.get("node_id").or(p.get("status")).unwrap_or(&Value::Null)
            );
            if v["event"] == "done" || v["event"] == "error" {
                for (media, art) in p["final_artifacts"].as_object().into_iter().flatten() {
                    println!("  {media}: {url}/v1/artifacts/{}", art.as_str().unwrap());
                }
                break;
            }
        }
    }
}
