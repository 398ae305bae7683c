//! Traces are self-contained: serialize one to JSONL, read it back and
//! re-run every monitor offline, byte-for-byte and verdict-for-verdict.
//!
//!     cargo run --release --example offline_check

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{ObserversSpec, ScenarioConfig, Simulation};
use gasper_confirm::trace::SimulationTrace;

fn main() {
    let config = ScenarioConfig {
        name: "offline".into(),
        num_validators: 12,
        slots_per_epoch: 4,
        horizon_slots: 20,
        delta: 2,
        seed: 9,
        observers: ObserversSpec::Ids(vec![0, 1]),
        ..Default::default()
    };
    let trace = Simulation::run(&config).expect("run");
    let inline = MonitorReport::build(&trace).expect("monitors");

    let dir = std::env::temp_dir().join("gasper-confirm-offline-check");
    std::fs::create_dir_all(&dir).expect("temp dir");
    let path = dir.join("trace.jsonl");
    std::fs::write(&path, trace.to_jsonl()).expect("write trace");
    println!("wrote {} ({} lines)", path.display(), trace.events.len() + 1);

    let text = std::fs::read_to_string(&path).expect("read back");
    let reparsed = SimulationTrace::from_jsonl(&text).expect("parse");
    let offline = MonitorReport::build(&reparsed).expect("offline monitors");

    println!("re-serialization identical: {}", reparsed.to_jsonl() == trace.to_jsonl());
    println!("offline report identical:   {}", offline == inline);
    println!("verdict: {}", if offline.pass { "pass" } else { "fail" });
}
