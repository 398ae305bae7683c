//! Minimal run: a fault-free network, every monitor clean.
//!
//!     cargo run --release --example fault_free

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{ObserversSpec, ScenarioConfig, Simulation};

fn main() {
    let config = ScenarioConfig {
        name: "fault-free".into(),
        num_validators: 16,
        slots_per_epoch: 8,
        horizon_slots: 40,
        delta: 2,
        observers: ObserversSpec::Ids(vec![0, 1]),
        seed: 42,
        ..Default::default()
    };
    let trace = Simulation::run(&config).expect("valid config");
    let report = MonitorReport::build(&trace).expect("monitors");

    println!("events logged: {}", trace.events.len());
    println!("ggst: tick {}", trace.ggst);
    for (rule, frag) in &report.safety {
        println!(
            "rule {rule}: {} checked confirmations, {} safety violations",
            frag.checked_confirmations,
            frag.violations.len()
        );
    }
    println!("properties clean: {}", report.properties.violations.is_empty());
    println!("verdict: {}", if report.pass { "pass" } else { "fail" });
}
