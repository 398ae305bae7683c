//! Scenario configuration: the single JSON document a run is a pure
//! function of.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{ChainConfig, ChurnSchedule, Eba, Slot, ValidatorId};
use crate::confirmation::{ConfirmationRule, SafetyParams};
use crate::simnet::adversary::AdversaryStrategy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("config error: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

/// Exact rational as a JSON string ("2/3", "0", "1/80").
pub fn parse_rational(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
        let d: BigInt = d.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
        if d.is_zero() {
            return Err(format!("zero denominator in '{s}'"));
        }
        Ok(BigRational::new(n, d))
    } else {
        let n: BigInt = s.parse().map_err(|_| format!("bad rational '{s}'"))?;
        Ok(BigRational::from_integer(n))
    }
}

pub fn rational_to_string(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Uniform { uniform: u64 },
    List(Vec<u64>),
}

impl WeightsSpec {
    pub fn to_eba(&self, n: usize) -> Result<Eba, ConfigError> {
        match self {
            WeightsSpec::Uniform { uniform } => {
                if *uniform == 0 {
                    return Err(err("weights", "uniform weight must be positive"));
                }
                Ok(Eba::uniform(n, *uniform))
            }
            WeightsSpec::List(list) => {
                if list.len() != n {
                    return Err(err(
                        "weights",
                        format!("expected {n} weights, got {}", list.len()),
                    ));
                }
                Ok(Eba::new(list.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObserversSpec {
    All(String), // "all"
    Ids(Vec<u32>),
}

impl Default for ObserversSpec {
    fn default() -> Self {
        ObserversSpec::All("all".into())
    }
}

/// Rule parameters, rationals as strings for exactness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsConfig {
    pub beta: String,
    /// Absolute weight; `null` means unbounded.
    pub lambda: Option<String>,
    pub safety_decay: String,
    /// Boost score p; the per-slot boost is (p/E) * total weight.
    pub boost_fraction: String,
    pub exit_rate: String,
    pub reward_rate: String,
    pub penalty_rate: String,
    pub slash_penalty: String,
    /// (epoch distance, factor) pairs; missing distances default to 1.
    pub w_lower: Vec<(i64, String)>,
    pub max_lookahead: i64,
    pub subtree_boost: bool,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        ParamsConfig {
            beta: "0".into(),
            lambda: None,
            safety_decay: "0".into(),
            boost_fraction: "2/5".into(),
            exit_rate: "0".into(),
            reward_rate: "0".into(),
            penalty_rate: "0".into(),
            slash_penalty: "0".into(),
            w_lower: Vec::new(),
            max_lookahead: 2,
            subtree_boost: false,
        }
    }
}

impl ParamsConfig {
    pub fn to_params(&self) -> Result<SafetyParams, ConfigError> {
        let get = |field: &str, s: &str| {
            parse_rational(s).map_err(|m| err(field, m)).and_then(|r| {
                if r.is_negative() {
                    Err(err(field, "must be non-negative"))
                } else {
                    Ok(r)
                }
            })
        };
        let mut w_lower = Vec::new();
        for (d, s) in &self.w_lower {
            w_lower.push((*d, get("w_lower", s)?));
        }
        Ok(SafetyParams {
            beta: get("beta", &self.beta)?,
            lambda: match &self.lambda {
                Some(s) => Some(get("lambda", s)?),
                None => None,
            },
            safety_decay: get("safety_decay", &self.safety_decay)?,
            boost_fraction: get("boost_fraction", &self.boost_fraction)?,
            exit_rate: get("exit_rate", &self.exit_rate)?,
            reward_rate: get("reward_rate", &self.reward_rate)?,
            penalty_rate: get("penalty_rate", &self.penalty_rate)?,
            slash_penalty: get("slash_penalty", &self.slash_penalty)?,
            w_lower,
            max_lookahead: self.max_lookahead,
            subtree_boost: self.subtree_boost,
        })
    }
}

/// One epoch's scheduled balance updates: explicit (validator, new weight)
/// pairs applied at the epoch boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChurnEntry {
    pub epoch: i64,
    pub set_weights: Vec<(u32, u64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AdversaryConfig {
    pub ids: Vec<u32>,
    pub strategy: AdversaryStrategy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub num_validators: u32,
    pub weights: WeightsSpec,
    pub slots_per_epoch: i64,
    pub ticks_per_slot: i64,
    pub vote_offset_ticks: i64,
    /// Post-GST delivery bound.
    pub delta: i64,
    pub gst: i64,
    pub horizon_slots: i64,
    pub seed: u64,
    pub adversary: AdversaryConfig,
    pub rules: Vec<ConfirmationRule>,
    pub params: ParamsConfig,
    pub churn_schedule: Vec<ChurnEntry>,
    pub observers: ObserversSpec,
    /// Scripted scenarios may pin committees (per epoch, per slot) and
    /// proposers exactly; derivation is seeded otherwise.
    pub pinned_committees: Option<Vec<Vec<Vec<u32>>>>,
    pub pinned_proposers: Option<BTreeMap<Slot, u32>>,
    pub log_raw_safe: bool,
    pub log_qp_samples: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: "scenario".into(),
            num_validators: 16,
            weights: WeightsSpec::Uniform { uniform: 1 },
            slots_per_epoch: 32,
            ticks_per_slot: 12,
            vote_offset_ticks: 4,
            delta: 2,
            gst: 0,
            horizon_slots: 64,
            seed: 0,
            adversary: AdversaryConfig::default(),
            rules: ConfirmationRule::ALL.to_vec(),
            params: ParamsConfig::default(),
            churn_schedule: Vec::new(),
            observers: ObserversSpec::default(),
            pinned_committees: None,
            pinned_proposers: None,
            log_raw_safe: false,
            log_qp_samples: false,
        }
    }
}

impl ScenarioConfig {
    pub fn chain_config(&self) -> ChainConfig {
        ChainConfig {
            slots_per_epoch: self.slots_per_epoch,
            ticks_per_slot: self.ticks_per_slot,
            vote_offset_ticks: self.vote_offset_ticks,
        }
    }

    pub fn churn(&self) -> ChurnSchedule {
        let mut out = ChurnSchedule::new();
        for entry in &self.churn_schedule {
            out.entry(entry.epoch).or_default().extend(
                entry.set_weights.iter().map(|&(v, w)| (ValidatorId(v), w)),
            );
        }
        out
    }

    pub fn adversary_ids(&self) -> Vec<ValidatorId> {
        let mut ids: Vec<ValidatorId> =
            self.adversary.ids.iter().map(|&i| ValidatorId(i)).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn observer_ids(&self) -> Vec<ValidatorId> {
        let adversaries = self.adversary_ids();
        match &self.observers {
            ObserversSpec::All(_) => (0..self.num_validators)
                .map(ValidatorId)
                .filter(|v| !adversaries.contains(v))
                .collect(),
            ObserversSpec::Ids(ids) => {
                let mut out: Vec<ValidatorId> = ids
                    .iter()
                    .map(|&i| ValidatorId(i))
                    .filter(|v| !adversaries.contains(v))
                    .collect();
                out.sort();
                out.dedup();
                out
            }
        }
    }

    pub fn validate(&self) -> Result<SafetyParams, ConfigError> {
        let cfg = self.chain_config();
        cfg.validate().map_err(|m| err("time", m))?;
        if self.num_validators == 0 || self.num_validators as usize > crate::chain::MAX_VALIDATORS
        {
            return Err(err(
                "num_validators",
                format!("must be in 1..={}", crate::chain::MAX_VALIDATORS),
            ));
        }
        if self.delta < 0 || self.delta >= self.ticks_per_slot - self.vote_offset_ticks {
            return Err(err(
                "delta",
                format!(
                    "must satisfy 0 <= delta < ticks_per_slot - vote_offset_ticks = {}",
                    self.ticks_per_slot - self.vote_offset_ticks
                ),
            ));
        }
        if self.gst < 0 {
            return Err(err("gst", "must be non-negative"));
        }
        if self.horizon_slots < 2 {
            return Err(err("horizon_slots", "must be at least 2"));
        }
        let eba = self.weights.to_eba(self.num_validators as usize)?;
        if eba.total_weight() == 0 {
            return Err(err("weights", "total weight must be positive"));
        }
        for &id in &self.adversary.ids {
            if id >= self.num_validators {
                return Err(err("adversary.ids", format!("validator {id} out of range")));
            }
        }
        if self.rules.is_empty() {
            return Err(err("rules", "select at least one confirmation rule"));
        }
        let params = self.params.to_params()?;
        if params.beta >= BigRational::one() {
            return Err(err("params.beta", "must be below 1"));
        }
        // Churn schedules must stay within the configured rates, otherwise
        // the run would void the churn rule's premises by construction.
        self.validate_churn(&eba, &params)?;
        if let Some(committees) = &self.pinned_committees {
            let tables: Vec<Vec<Vec<ValidatorId>>> = committees
                .iter()
                .map(|epoch| {
                    epoch
                        .iter()
                        .map(|c| c.iter().map(|&v| ValidatorId(v)).collect())
                        .collect()
                })
                .collect();
            crate::chain::CommitteeSchedule::pinned(
                cfg,
                tables,
                self.pinned_proposer_map(),
            )
            .map_err(|m| err("pinned_committees", m))?;
        }
        Ok(params)
    }

    pub fn pinned_proposer_map(&self) -> BTreeMap<Slot, ValidatorId> {
        self.pinned_proposers
            .as_ref()
            .map(|m| m.iter().map(|(&s, &v)| (s, ValidatorId(v))).collect())
            .unwrap_or_default()
    }

    fn validate_churn(&self, genesis_eba: &Eba, params: &SafetyParams) -> Result<(), ConfigError> {
        if self.churn_schedule.is_empty() {
            return Ok(());
        }
        params
            .validate_rates(self.slots_per_epoch)
            .map_err(|e| err("params", e.to_string()))?;
        let mut eba = genesis_eba.clone();
        let churn = self.churn();
        let max_epoch = churn.keys().copied().max().unwrap_or(0);
        for e in 1..=max_epoch {
            let before = eba.clone();
            if let Some(updates) = churn.get(&e) {
                for &(v, w) in updates {
                    eba.set_weight(v, w);
                }
            }
            let total_before = BigRational::from_integer(before.total_weight().into());
            let mut exited = BigRational::zero();
            let mut entered = BigRational::zero();
            for v in (0..self.num_validators).map(ValidatorId) {
                let old = before.weight_of(v);
                let new = eba.weight_of(v);
                let old_r = BigRational::from_integer(old.into());
                let new_r = BigRational::from_integer(new.into());
                if old > 0 && new == 0 {
                    exited += &old_r;
                } else if old == 0 && new > 0 {
                    entered += &new_r;
                } else if old > 0 {
                    if new_r > &old_r * (BigRational::one() + &params.reward_rate) {
                        return Err(err(
                            "churn_schedule",
                            format!("epoch {e}: reward on {v} exceeds the reward rate"),
                        ));
                    }
                    if new_r < &old_r * (BigRational::one() - &params.penalty_rate) {
                        return Err(err(
                            "churn_schedule",
                            format!("epoch {e}: penalty on {v} exceeds the penalty rate"),
                        ));
                    }
                }
            }
            if exited > &total_before * &params.exit_rate {
                return Err(err(
                    "churn_schedule",
                    format!("epoch {e}: exited weight exceeds the exit rate"),
                ));
            }
            if entered > &total_before * &params.exit_rate {
                return Err(err(
                    "churn_schedule",
                    format!("epoch {e}: entered weight exceeds the entry bound"),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_parsing() {
        assert_eq!(parse_rational("2/3").unwrap(), BigRational::new(2.into(), 3.into()));
        assert_eq!(parse_rational("5").unwrap(), BigRational::from_integer(5.into()));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
        assert_eq!(rational_to_string(&parse_rational("4/6").unwrap()), "2/3");
        assert_eq!(rational_to_string(&parse_rational("7").unwrap()), "7");
    }

    #[test]
    fn default_config_validates() {
        let cfg = ScenarioConfig::default();
        assert!(cfg.validate().is_ok());
        // round-trips through JSON
        let json = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn delta_bound_enforced() {
        let cfg = ScenarioConfig { delta: 8, ..Default::default() };
        // ticks 12, offset 4: delta must be < 8
        assert!(cfg.validate().is_err());
        let cfg = ScenarioConfig { delta: 7, ..Default::default() };
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn churn_rate_guard() {
        let mut cfg = ScenarioConfig {
            num_validators: 4,
            weights: WeightsSpec::Uniform { uniform: 1000 },
            ..Default::default()
        };
        cfg.params.reward_rate = "1/100".into();
        cfg.params.penalty_rate = "1/100".into();
        cfg.params.exit_rate = "1/100".into();
        cfg.params.slash_penalty = "1/100".into();
        cfg.churn_schedule =
            vec![ChurnEntry { epoch: 1, set_weights: vec![(0, 1010)] }];
        assert!(cfg.validate().is_ok());
        cfg.churn_schedule = vec![ChurnEntry { epoch: 1, set_weights: vec![(0, 1011)] }];
        let e = cfg.validate().unwrap_err();
        assert!(e.to_string().contains("reward"));
    }

    #[test]
    fn observers_exclude_adversaries() {
        let cfg = ScenarioConfig {
            num_validators: 4,
            adversary: AdversaryConfig { ids: vec![1], strategy: AdversaryStrategy::Silent },
            ..Default::default()
        };
        let obs = cfg.observer_ids();
        assert_eq!(obs, vec![ValidatorId(0), ValidatorId(2), ValidatorId(3)]);
    }
}
