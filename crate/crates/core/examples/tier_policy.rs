//! Shows the tier and per-tool policy for a few hardware profiles.
//!
//! cargo run -p weave-core --example tier_policy

use weave_core::{
    policy_for_tool, probe_hardware, select_tier, HardwareProfile, ProbeSource, Registry,
    TierThresholds,
};

fn main() {
    let registry = Registry::builtin();
    let compose = registry.get("compose.abc").unwrap();
    let profiles = [
        ("this machine", probe_hardware(ProbeSource::System)),
        (
            "laptop, no accelerator",
            HardwareProfile::new(0, 16_384, 100_000),
        ),
        ("12 GB card", HardwareProfile::new(12_288, 32_768, 100_000)),
        ("46 GB card", HardwareProfile::a40()),
    ];
    for (name, prof) in profiles {
        let tier = select_tier(&prof, None, &TierThresholds::default());
        print!("{name:<24} accel {:>6} MB -> {tier:<6}", prof.accel_mem_mb);
        match policy_for_tool(tier, compose, &prof) {
            Ok(p) => println!(
                " compose: {:?} on {:?}, lazy {}, parallel {}, batch budget {} MB",
                p.precision, p.placement, p.lazy_load, p.max_parallel, p.batch_budget_mb
            ),
            Err(e) => println!(" compose: {e}"),
        }
    }
}
