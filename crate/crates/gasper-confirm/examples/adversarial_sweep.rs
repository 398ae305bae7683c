//! A slice of the adversarial matrix: seeds x {equivocate, withhold-release,
//! conflicting-ffg}, verdict rows as CSV.
//!
//!     cargo run --release --example adversarial_sweep [num_seeds]

use gasper_confirm::sweep::{adversarial_sweep_configs, run_sweep, sweep_csv};

fn main() {
    let num_seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let configs = adversarial_sweep_configs(num_seeds);
    println!("running {} scenarios...", configs.len());
    let results = run_sweep(&configs).expect("sweep");
    let rows: Vec<_> = results.iter().map(|(r, _)| r.clone()).collect();
    print!("{}", sweep_csv(&rows));
    let safety: usize = rows.iter().map(|r| r.safety_violations).sum();
    let mono: usize = rows.iter().map(|r| r.monotonicity_violations).sum();
    eprintln!("safety violations: {safety}, monotonicity violations: {mono}");
}
