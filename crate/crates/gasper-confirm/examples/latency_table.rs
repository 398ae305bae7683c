//! Per-block confirmation and finalization latency table, as the CLI's
//! summary.csv emits it.
//!
//!     cargo run --release --example latency_table

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{ObserversSpec, ScenarioConfig, Simulation};

fn main() {
    let config = ScenarioConfig {
        name: "latency".into(),
        num_validators: 32,
        slots_per_epoch: 8,
        horizon_slots: 48,
        delta: 1,
        seed: 5,
        observers: ObserversSpec::Ids(vec![0]),
        ..Default::default()
    };
    let trace = Simulation::run(&config).expect("run");
    let report = MonitorReport::build(&trace).expect("monitors");
    print!("{}", report.summary_csv());

    // aggregate per rule
    for rule in ["lmd", "hfc", "churn", "appendix"] {
        let mut latencies: Vec<i64> = report
            .latency
            .iter()
            .filter(|r| r.rule == rule)
            .filter_map(|r| r.latency_slots)
            .collect();
        latencies.sort();
        if latencies.is_empty() {
            continue;
        }
        eprintln!(
            "{rule}: n={} min={} median={} max={}",
            latencies.len(),
            latencies.first().unwrap(),
            latencies[latencies.len() / 2],
            latencies.last().unwrap()
        );
    }
}
