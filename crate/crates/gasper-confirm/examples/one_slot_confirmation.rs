//! Best-case confirmation time: with GST = 0 and no adversary, every block
//! is confirmed one slot after proposal, while finalization of an
//! epoch-boundary block takes 64 slots (12 s vs 768 s at mainnet cadence).
//!
//!     cargo run --release --example one_slot_confirmation

use std::collections::BTreeMap;

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{ObserversSpec, ScenarioConfig, Simulation, WeightsSpec};

fn main() {
    let config = ScenarioConfig {
        name: "one-slot-confirmation".into(),
        num_validators: 64,
        weights: WeightsSpec::Uniform { uniform: 1 },
        slots_per_epoch: 32,
        ticks_per_slot: 12,
        vote_offset_ticks: 4,
        delta: 0,
        gst: 0,
        horizon_slots: 128,
        seed: 1,
        observers: ObserversSpec::Ids(vec![0, 1, 2, 3]),
        ..Default::default()
    };
    let trace = Simulation::run(&config).expect("run");
    let report = MonitorReport::build(&trace).expect("monitors");

    let mut histogram: BTreeMap<i64, usize> = BTreeMap::new();
    for row in report.latency.iter().filter(|r| r.rule == "hfc") {
        if let Some(l) = row.latency_slots {
            *histogram.entry(l).or_default() += 1;
        }
    }
    println!("confirmation latency histogram (slots -> blocks): {histogram:?}");

    let boundary = report
        .latency
        .iter()
        .find(|r| r.rule == "hfc" && r.slot == 32)
        .expect("slot-32 block");
    println!(
        "epoch-boundary block at slot 32: confirmed after {} s, finalized after {} s",
        boundary.latency_seconds.unwrap(),
        boundary.finalize_seconds.unwrap()
    );
}
