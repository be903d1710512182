#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read};
use std::time::Duration;

use reqwest::blocking::{Client, Response};
use serde_json::{json, Value};
use weave_core::{to_canonical, HardwareProfile};
use weave_gateway::server::{self, ServerHandle};
use weave_gateway::{Gateway, GatewayConfig};

pub const JIG: &str = "compose a jig in G, 6/8 time, and let me hear it";

pub fn config() -> GatewayConfig {
    GatewayConfig {
        profile: HardwareProfile::new(4096, 16_384, 10_000),
        ..GatewayConfig::default()
    }
}

pub fn start(config: GatewayConfig) -> ServerHandle {
    let gw = Gateway::new(config).expect("gateway");
    server::spawn(gw, "127.0.0.1:0".parse().unwrap()).expect("server")
}

pub fn client() -> Client {
    Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .unwrap()
}

/// Parses the body and checks it was sent in canonical form.
pub fn canonical_json(resp: Response) -> (u16, Value) {
    let status = resp.status().as_u16();
    let text = resp.text().unwrap();
    let v: Value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"));
    assert_eq!(text, to_canonical(&v), "response is not canonical JSON");
    (status, v)
}

pub fn new_session(c: &Client, url: &str, body: Value) -> String {
    let (status, v) = canonical_json(
        c.post(format!("{url}/v1/sessions"))
            .json(&body)
            .send()
            .unwrap(),
    );
    assert_eq!(status, 201, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

pub fn send(c: &Client, url: &str, session: &str, text: &str) -> (u16, Value) {
    canonical_json(
        c.post(format!("{url}/v1/sessions/{session}/messages"))
            .json(&json!({ "text": text }))
            .send()
            .unwrap(),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct SseEvent {
    pub event: String,
    pub id: Option<u64>,
    pub data: Value,
}

/// Minimal text/event-stream reader.
pub struct Sse {
    lines: std::io::Lines<BufReader<Box<dyn Read + Send>>>,
}

impl Sse {
    pub fn open(c: &Client, url: &str, session: &str) -> Sse {
        let resp = c
            .get(format!("{url}/v1/sessions/{session}/events"))
            .send()
            .unwrap();
        assert_eq!(resp.status().as_u16(), 200);
        let ct = resp.headers()["content-type"].to_str().unwrap().to_string();
        assert!(ct.starts_with("text/event-stream"), "{ct}");
        let r: Box<dyn Read + Send> = Box::new(resp);
        Sse {
            lines: BufReader::new(r).lines(),
        }
    }

    pub fn next_event(&mut self) -> Option<SseEvent> {
        let (mut event, mut id, mut data) = (None, None, String::new());
        loop {
            let line = self.lines.next()?.ok()?;
            if line.is_empty() {
                if let Some(e) = event.take() {
                    return Some(SseEvent {
                        event: e,
                        id,
                        data: serde_json::from_str(&data).unwrap_or(Value::Null),
                    });
                }
                data.clear();
                continue;
            }
            if line.starts_with(':') {
                continue;
            }
            let (field, value) = line.split_once(':').unwrap_or((&line, ""));
            let value = value.strip_prefix(' ').unwrap_or(value);
            match field {
                "event" => event = Some(value.to_string()),
                "id" => id = value.parse().ok(),
                "data" => data.push_str(value),
                _ => {}
            }
        }
    }

    /// Reads through the next `done` or `error` event, inclusive.
    pub fn until_terminal(&mut self) -> Vec<SseEvent> {
        let mut out = Vec::new();
        while let Some(e) = self.next_event() {
            let end = e.event == "done" || e.event == "error";
            out.push(e);
            if end {
                return out;
            }
        }
        panic!("stream ended before a terminal event: {out:?}");
    }
}

pub fn kinds(events: &[SseEvent]) -> Vec<&str> {
    events.iter().map(|e| e.event.as_str()).collect()
}

pub fn fetch(c: &Client, url: &str, artifact: &str) -> (String, Vec<u8>) {
    let resp = c
        .get(format!("{url}/v1/artifacts/{artifact}"))
        .send()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let ct = resp.headers()["content-type"].to_str().unwrap().to_string();
    (ct, resp.bytes().unwrap().to_vec())
}
