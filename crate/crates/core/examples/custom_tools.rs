//! Extends the default registry from a tools.toml document and plans with it.
//!
//! cargo run -p weave-core --example custom_tools

use weave_core::{derive_request_spec, plan, CostFactors, HardwareProfile, Tier, ToolsConfig};

const TOOLS: &str = r#"
include_defaults = true

[tiers]
medium_min_mb = 6000
high_min_mb = 20000

[[tool]]
id = "compose.abc.fast"
inputs = ["text/plain"]
output = "symbolic/abc"
cost_estimate = 600
mem_estimate_mb = { int4 = 900, int8 = 1700, fp16 = 3300 }
kind = "compose"
backend = "http"
endpoint = "http://127.0.0.1:9000/v1/invoke/compose.abc.fast"
"#;

fn main() {
    let cfg = ToolsConfig::parse(TOOLS).unwrap();
    let registry = cfg.registry().unwrap();
    for t in registry.tools() {
        println!(
            "{:<18} {} -> {} ({})",
            t.id, t.inputs[0], t.output, t.backend
        );
    }
    let spec = derive_request_spec("a march in D, as midi", &[]).unwrap();
    let p = plan(
        &spec,
        &registry,
        Tier::Medium,
        &HardwareProfile::new(8192, 32_768, 0),
        &CostFactors::default(),
    )
    .unwrap();
    let tools: Vec<&str> = p.nodes.iter().map(|n| n.tool_id.as_str()).collect();
    println!("plan: {}", tools.join(" -> "));
}
