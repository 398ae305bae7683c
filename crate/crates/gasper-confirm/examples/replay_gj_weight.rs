//! Replays the construction where two observers momentarily hold different
//! greatest-justified checkpoints whose total weights differ by a scripted
//! slashing cut, violating the weight precondition that the canonical-
//! forever guarantee rests on.
//!
//!     cargo run --release --example replay_gj_weight

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{replay_counterexample, CounterexampleName};
use gasper_confirm::trace::EventPayload;

fn main() {
    let trace = replay_counterexample(CounterexampleName::GjWeight).expect("replay");
    let report = MonitorReport::build(&trace).expect("monitors");

    for e in &trace.events {
        if let EventPayload::GjWeightDivergence {
            observer_low,
            observer_high,
            total_low,
            total_high,
        } = e.ev
        {
            println!(
                "tick {:4}: observer {} sees GJ total {} while observer {} sees {} (gap {})",
                e.tick,
                observer_low,
                total_low,
                observer_high,
                total_high,
                total_high - total_low
            );
        }
    }
    println!("divergence events: {}", report.gj_weight_divergences);
    println!(
        "note: half the stake is Byzantine here, so the audits void the run \
         (window audit clean: {}) and the rule never fires at beta = 1/2",
        report.audit.beta_window_clean
    );
}
