//! Seed sweeps: fan a family of scenarios across worker threads and collect
//! one verdict row per run.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::monitors::MonitorReport;
use crate::simnet::{
    AdversaryConfig, AdversaryStrategy, ConfigError, ObserversSpec, ParamsConfig, ScenarioConfig,
    Simulation, WeightsSpec,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub scenario: String,
    pub seed: u64,
    pub strategy: String,
    pub beta: String,
    pub pass: bool,
    pub strict_pass: bool,
    pub safety_violations: usize,
    pub monotonicity_violations: usize,
    pub checked_confirmations: usize,
    pub void_confirmations: usize,
    pub properties_ok: bool,
    pub realized_beta: String,
}

pub fn row_from_report(config: &ScenarioConfig, report: &MonitorReport) -> SweepRow {
    let strategy = match &config.adversary.strategy {
        AdversaryStrategy::Silent => "silent",
        AdversaryStrategy::Equivocate { .. } => "equivocate",
        AdversaryStrategy::WithholdRelease { .. } => "withhold_release",
        AdversaryStrategy::ConflictingFfg => "conflicting_ffg",
        AdversaryStrategy::Scripted(_) => "scripted",
    };
    SweepRow {
        scenario: config.name.clone(),
        seed: config.seed,
        strategy: strategy.into(),
        beta: config.params.beta.clone(),
        pass: report.pass,
        strict_pass: report.strict_pass,
        safety_violations: report.safety.values().map(|f| f.violations.len()).sum(),
        monotonicity_violations: report.monotonicity.values().map(|f| f.violations.len()).sum(),
        checked_confirmations: report.safety.values().map(|f| f.checked_confirmations).sum(),
        void_confirmations: report.safety.values().map(|f| f.void_confirmations).sum(),
        properties_ok: report.properties.violations.is_empty(),
        realized_beta: report.audit.realized_beta_max.clone(),
    }
}

/// Runs every config in parallel (each run stays single-threaded) and
/// reports rows in input order.
pub fn run_sweep(
    configs: &[ScenarioConfig],
) -> Result<Vec<(SweepRow, MonitorReport)>, ConfigError> {
    let results: Vec<Result<(SweepRow, MonitorReport), ConfigError>> = configs
        .par_iter()
        .map(|config| {
            let trace = Simulation::run(config)?;
            let report = MonitorReport::build(&trace)
                .map_err(|m| ConfigError { field: "trace".into(), message: m })?;
            Ok((row_from_report(config, &report), report))
        })
        .collect();
    results.into_iter().collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "scenario,seed,strategy,beta,pass,strict_pass,safety_violations,monotonicity_violations,checked_confirmations,void_confirmations,properties_ok,realized_beta\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.scenario,
            r.seed,
            r.strategy,
            r.beta,
            r.pass,
            r.strict_pass,
            r.safety_violations,
            r.monotonicity_violations,
            r.checked_confirmations,
            r.void_confirmations,
            r.properties_ok,
            r.realized_beta,
        ));
    }
    out
}

/// The adversarial acceptance matrix: `num_seeds` seeds for each of the
/// three built-in strategies, with the Byzantine set stratified across a
/// fixed committee partition so the realized per-window fraction equals the
/// configured level exactly (1/10 for even seeds, 1/5 for odd seeds).
pub fn adversarial_sweep_configs(num_seeds: u64) -> Vec<ScenarioConfig> {
    let strategies = [
        ("equivocate", AdversaryStrategy::Equivocate { slots: None }),
        ("withhold_release", AdversaryStrategy::WithholdRelease { release_slot: 14 }),
        ("conflicting_ffg", AdversaryStrategy::ConflictingFfg),
    ];
    let mut out = Vec::new();
    for (label, strategy) in strategies {
        for seed in 0..num_seeds {
            out.push(adversarial_config(label, strategy.clone(), seed));
        }
    }
    out
}

fn adversarial_config(label: &str, strategy: AdversaryStrategy, seed: u64) -> ScenarioConfig {
    let n: u32 = 40;
    let e: i64 = 4;
    let committee_size = (n as i64 / e) as u32; // 10
    // adversarial fraction level alternates between 1/10 and 1/5
    let (adv_per_committee, beta) = if seed.is_multiple_of(2) { (1u32, "1/10") } else { (2u32, "1/5") };
    let adv_total = adv_per_committee * e as u32;
    // adversaries take the first seats of each committee
    let adversary_ids: Vec<u32> = (0..adv_total).collect();
    let mut committee_tables: Vec<Vec<u32>> = Vec::new();
    let honest_ids: Vec<u32> = (adv_total..n).collect();
    let honest_per_committee = committee_size - adv_per_committee;
    for k in 0..e as usize {
        let mut members: Vec<u32> = adversary_ids
            [k * adv_per_committee as usize..(k + 1) * adv_per_committee as usize]
            .to_vec();
        members.extend_from_slice(
            &honest_ids
                [k * honest_per_committee as usize..(k + 1) * honest_per_committee as usize],
        );
        committee_tables.push(members);
    }
    // the same partition every epoch keeps every committee window at the
    // exact configured fraction
    let horizon: i64 = 20;
    let epochs = (horizon / e) as usize + 3;
    let committees: Vec<Vec<Vec<u32>>> = (0..epochs).map(|_| committee_tables.clone()).collect();

    // seeded proposer table over the whole validator set
    let mut proposers = std::collections::BTreeMap::new();
    for s in 0..horizon {
        let mix = seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(s as u64)
            .wrapping_mul(0xbf58476d1ce4e5b9);
        proposers.insert(s, (mix % n as u64) as u32);
    }

    // churn runs exercise the hardened rule's thresholds with tiny rates
    let churn = seed.is_multiple_of(3);
    let params = ParamsConfig {
        beta: beta.into(),
        boost_fraction: "1/20".into(), // p/E = 1/80 at E = 4
        exit_rate: if churn { "1/100".into() } else { "0".into() },
        reward_rate: if churn { "1/100".into() } else { "0".into() },
        penalty_rate: if churn { "1/100".into() } else { "0".into() },
        slash_penalty: "1/100".into(),
        ..Default::default()
    };
    let churn_schedule = if churn {
        vec![
            crate::simnet::ChurnEntry { epoch: 2, set_weights: vec![(38, 1010), (39, 990)] },
            crate::simnet::ChurnEntry { epoch: 3, set_weights: vec![(38, 1000)] },
        ]
    } else {
        Vec::new()
    };

    ScenarioConfig {
        name: format!("sweep-{label}-s{seed}"),
        num_validators: n,
        weights: WeightsSpec::Uniform { uniform: 1000 },
        slots_per_epoch: e,
        ticks_per_slot: 12,
        vote_offset_ticks: 4,
        delta: 2,
        // GST at most one epoch in
        gst: ((seed % (e as u64 + 1)) * 12) as i64,
        horizon_slots: horizon,
        seed,
        adversary: AdversaryConfig { ids: adversary_ids, strategy },
        rules: crate::confirmation::ConfirmationRule::ALL.to_vec(),
        params,
        churn_schedule,
        observers: ObserversSpec::Ids(vec![
            adv_total,
            adv_total + 1,
            adv_total + 2,
            adv_total + 3,
        ]),
        pinned_committees: Some(committees),
        pinned_proposers: Some(proposers),
        log_raw_safe: false,
        log_qp_samples: false,
    }
}

/// Generic matrix sweep used by the CLI: one run per (seed, beta) pair over
/// a base scenario.
pub fn matrix_configs(
    base: &ScenarioConfig,
    seeds: impl Iterator<Item = u64>,
    betas: &[String],
) -> Vec<ScenarioConfig> {
    let mut out = Vec::new();
    for seed in seeds {
        if betas.is_empty() {
            let mut c = base.clone();
            c.seed = seed;
            c.name = format!("{}-s{seed}", base.name);
            out.push(c);
        } else {
            for beta in betas {
                let mut c = base.clone();
                c.seed = seed;
                c.params.beta = beta.clone();
                c.name = format!("{}-s{seed}-b{}", base.name, beta.replace('/', "_"));
                out.push(c);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_configs_validate() {
        for config in adversarial_sweep_configs(4) {
            assert!(config.validate().is_ok(), "config {} invalid", config.name);
        }
    }

    #[test]
    fn small_sweep_runs_clean() {
        let configs = adversarial_sweep_configs(2);
        let rows = run_sweep(&configs).unwrap();
        assert_eq!(rows.len(), 6);
        for (row, report) in &rows {
            assert_eq!(row.safety_violations, 0, "{}: {:?}", row.scenario, report.safety);
            assert_eq!(
                row.monotonicity_violations, 0,
                "{}: {:?}",
                row.scenario, report.monotonicity
            );
            assert!(row.properties_ok, "{}", row.scenario);
        }
        // the stratified committees realize the configured fraction exactly
        let even = rows.iter().find(|(r, _)| r.seed == 0).unwrap();
        assert_eq!(even.1.audit.realized_beta_max, "1/10");
        let odd = rows.iter().find(|(r, _)| r.seed == 1).unwrap();
        assert_eq!(odd.1.audit.realized_beta_max, "1/5");
    }
}
