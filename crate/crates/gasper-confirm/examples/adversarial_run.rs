//! One adversarial run: a fifth of the stake equivocates, the filters strip
//! its votes, the auditors measure what actually happened, and the rules
//! stay safe.
//!
//!     cargo run --release --example adversarial_run

use gasper_confirm::monitors::MonitorReport;
use gasper_confirm::simnet::{
    AdversaryConfig, AdversaryStrategy, ObserversSpec, ParamsConfig, ScenarioConfig, Simulation,
};

fn main() {
    let config = ScenarioConfig {
        name: "equivocation-campaign".into(),
        num_validators: 20,
        slots_per_epoch: 4,
        horizon_slots: 24,
        delta: 2,
        gst: 12,
        seed: 3,
        adversary: AdversaryConfig {
            ids: vec![16, 17, 18, 19],
            strategy: AdversaryStrategy::Equivocate { slots: None },
        },
        params: ParamsConfig {
            beta: "1/5".into(),
            boost_fraction: "1/20".into(),
            slash_penalty: "1/10".into(),
            ..Default::default()
        },
        observers: ObserversSpec::Ids(vec![0, 1]),
        ..Default::default()
    };
    let trace = Simulation::run(&config).expect("run");
    let report = MonitorReport::build(&trace).expect("monitors");

    println!("realized per-window adversarial fraction: {}", report.audit.realized_beta_max);
    println!("slashed weight: {}", report.audit.slashed_total);
    println!("assumed beta: {} (window audit clean: {})",
        report.audit.beta_assumed, report.audit.beta_window_clean);
    for (rule, frag) in &report.safety {
        println!(
            "rule {rule}: premises_clean={} checked={} void={} violations={}",
            frag.premises_clean,
            frag.checked_confirmations,
            frag.void_confirmations,
            frag.violations.len()
        );
    }
    println!("verdict: {}", if report.pass { "pass" } else { "fail" });
}
