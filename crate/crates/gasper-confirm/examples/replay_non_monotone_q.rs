//! Replays the construction where the raw safety condition passes at one
//! slot start and fails at the next (two committee members defect to a
//! stale branch), while the cached confirmation rule never un-confirms the
//! block.
//!
//!     cargo run --release --example replay_non_monotone_q

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{replay_counterexample, CounterexampleName};
use gasper_confirm::trace::EventPayload;

fn main() {
    let trace = replay_counterexample(CounterexampleName::NonMonotoneQ).expect("replay");
    let report = MonitorReport::build(&trace).expect("monitors");

    // show the raw condition timeline for the watched block (the one that
    // flips), per slot start
    let mut flip_block = None;
    let mut last: std::collections::BTreeMap<_, bool> = Default::default();
    for e in &trace.events {
        if let EventPayload::RawSafe { observer, block, pass } = e.ev {
            if let Some(prev) = last.insert((observer, block), pass) {
                if prev && !pass && flip_block.is_none() {
                    flip_block = Some(block);
                }
            }
        }
    }
    let flip_block = flip_block.expect("a raw flip");
    println!("watched block: {}", flip_block.short());
    println!("slot-start timeline (tick, raw condition, still confirmed):");
    for e in &trace.events {
        if let EventPayload::RawSafe { block, pass, .. } = e.ev {
            if block == flip_block {
                println!("  tick {:4}: raw {}", e.tick, if pass { "pass" } else { "FAIL" });
            }
        }
    }
    println!("raw true->false flips in the trace: {}", report.raw_safe_flips);
    println!(
        "cached-rule confirmation flips: {} (the forcing window keeps it confirmed)",
        report.any_confirmed_flips.get("lmd").copied().unwrap_or(0)
    );
}
