//! Derives a request from prompt text and prints the plan at each tier.
//!
//! cargo run -p weave-core --example plan_request -- "a reel in D, score and audio"

use weave_core::{derive_request_spec, plan, CostFactors, HardwareProfile, Registry, Tier};

fn main() {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "compose a jig in G, 6/8 time, and let me hear it".into());
    let spec = derive_request_spec(&text, &[]).expect("request");
    let goals: Vec<String> = spec.goals.iter().map(|g| g.to_string()).collect();
    println!(
        "goals {}  constraints {}",
        goals.join(", "),
        spec.constraints.to_params()
    );

    let registry = Registry::builtin();
    let profile = HardwareProfile::a40();
    for tier in [Tier::Low, Tier::Medium, Tier::High] {
        let p = plan(&spec, &registry, tier, &profile, &CostFactors::default()).expect("plan");
        println!("\n{tier}: total cost {}", p.total_cost);
        for n in &p.nodes {
            println!(
                "  {} {:<18} {:?} on {:?}, cost {}",
                n.node_id, n.tool_id, n.policy.precision, n.policy.placement, n.cost
            );
        }
    }
}
