//! Ground-truth oracles over traces: Safety and Monotonicity checks per
//! rule, assumption auditors, protocol-property assertions and the latency
//! table. Monitors are pure functions of a trace; everything here can be
//! recomputed offline from the JSONL file.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::chain::{
    BlockDraft, BlockId, BlockStore, ChainConfig, Checkpoint, CommitteeSchedule, Epoch, Slot,
    Tick, ValidatorId, ValidatorSet,
};
use crate::confirmation::{
    frac, hon_ffg_ratio, hon_ffg_ratio_var, rat_int, ConfirmationRule, SafetyParams,
};
use crate::ffg::FfgVote;
use crate::simnet::ScenarioConfig;
use crate::simnet::config::rational_to_string;
use crate::trace::{EventPayload, SimulationTrace};

/// Everything monitors need, reconstructed deterministically from a trace.
pub struct TraceIndex {
    pub config: ScenarioConfig,
    pub cfg: ChainConfig,
    pub params: SafetyParams,
    pub store: BlockStore,
    pub schedule: CommitteeSchedule,
    pub honest: ValidatorSet,
    pub adversaries: ValidatorSet,
    pub observers: Vec<ValidatorId>,
    pub ggst: Tick,
    pub horizon_tick: Tick,
    /// (tick, validator, head) at slot starts and vote deadlines.
    pub head_samples: Vec<(Tick, ValidatorId, BlockId)>,
    /// (tick, observer, head, gj, gf) at slot starts.
    pub observer_states: Vec<(Tick, ValidatorId, BlockId, Checkpoint, Checkpoint)>,
    /// frontier samples per (observer, rule), ascending tick.
    pub frontiers: BTreeMap<(ValidatorId, ConfirmationRule), Vec<(Tick, BlockId)>>,
    pub raw_safe: Vec<(Tick, ValidatorId, BlockId, bool)>,
    pub qp_samples: Vec<(Tick, ValidatorId, BlockId, String, String)>,
    pub ffg_sent: Vec<(Tick, FfgVote)>,
    pub slash_events: Vec<(Tick, BlockId, ValidatorId, u64)>,
    /// block delivery ticks per validator.
    pub block_delivery: BTreeMap<(ValidatorId, BlockId), Tick>,
    pub gj_divergences: Vec<(Tick, ValidatorId, ValidatorId, u64, u64)>,
}

impl TraceIndex {
    pub fn build(trace: &SimulationTrace) -> Result<TraceIndex, String> {
        // via the text form: the Value deserializer cannot parse integer
        // map keys (pinned proposers, scripted groups)
        let config: ScenarioConfig =
            serde_json::from_str(&trace.config.to_string()).map_err(|e| e.to_string())?;
        let params = config.validate().map_err(|e| e.to_string())?;
        let cfg = config.chain_config();
        let genesis_eba = config
            .weights
            .to_eba(config.num_validators as usize)
            .map_err(|e| e.to_string())?;
        let churn = config.churn();
        let mut store = BlockStore::new(
            cfg,
            genesis_eba.clone(),
            churn.clone(),
            params.slash_penalty.clone(),
        );
        let num_epochs = cfg.epoch_of_slot(config.horizon_slots) as usize + 3;
        let schedule = match &config.pinned_committees {
            Some(tables) => {
                let tables = tables
                    .iter()
                    .map(|epoch| {
                        epoch
                            .iter()
                            .map(|c| c.iter().map(|&v| ValidatorId(v)).collect())
                            .collect()
                    })
                    .collect();
                CommitteeSchedule::pinned(cfg, tables, config.pinned_proposer_map())
                    .map_err(|e| e.to_string())?
            }
            None => CommitteeSchedule::derive(config.seed, cfg, &genesis_eba, &churn, num_epochs),
        };
        let adversaries = ValidatorSet::from_ids(config.adversary_ids());
        let honest = ValidatorSet::from_ids(
            (0..config.num_validators).map(ValidatorId).filter(|v| !adversaries.contains(*v)),
        );

        let mut index = TraceIndex {
            observers: config.observer_ids(),
            cfg,
            params,
            honest,
            adversaries,
            ggst: trace.ggst,
            horizon_tick: cfg.slot_start(trace.horizon_slots),
            head_samples: Vec::new(),
            observer_states: Vec::new(),
            frontiers: BTreeMap::new(),
            raw_safe: Vec::new(),
            qp_samples: Vec::new(),
            ffg_sent: Vec::new(),
            slash_events: Vec::new(),
            block_delivery: BTreeMap::new(),
            gj_divergences: Vec::new(),
            schedule,
            store,
            config,
        };
        store = std::mem::replace(
            &mut index.store,
            BlockStore::new(cfg, genesis_eba, churn, index.params.slash_penalty.clone()),
        );

        for e in &trace.events {
            match &e.ev {
                EventPayload::Block {
                    id,
                    slot,
                    proposer,
                    parent,
                    ffg_votes,
                    slashings,
                    payload,
                } => {
                    let inserted = store
                        .insert(BlockDraft {
                            slot: *slot,
                            proposer: *proposer,
                            parent: *parent,
                            ffg_votes: ffg_votes.clone(),
                            slashing_evidence: slashings.clone(),
                            payload: *payload,
                        })
                        .map_err(|err| format!("trace block replay failed: {err}"))?;
                    if inserted != *id {
                        return Err("trace block id mismatch on replay".into());
                    }
                }
                EventPayload::Head { validator, head } => {
                    index.head_samples.push((e.tick, *validator, *head));
                }
                EventPayload::ObserverState { observer, head, gj, gf } => {
                    index.observer_states.push((e.tick, *observer, *head, *gj, *gf));
                }
                EventPayload::Frontier { observer, rule, frontier } => {
                    index
                        .frontiers
                        .entry((*observer, *rule))
                        .or_default()
                        .push((e.tick, *frontier));
                }
                EventPayload::RawSafe { observer, block, pass } => {
                    index.raw_safe.push((e.tick, *observer, *block, *pass));
                }
                EventPayload::QpSample { observer, block, q, p } => {
                    index.qp_samples.push((e.tick, *observer, *block, q.clone(), p.clone()));
                }
                EventPayload::FfgVoteSent { vote } => index.ffg_sent.push((e.tick, *vote)),
                EventPayload::SlashIncluded { block, validator, cut } => {
                    index.slash_events.push((e.tick, *block, *validator, *cut));
                }
                EventPayload::Deliver { to, msg: crate::trace::MsgRef::Block { id } } => {
                    index.block_delivery.entry((*to, *id)).or_insert(e.tick);
                }
                EventPayload::GjWeightDivergence {
                    observer_low,
                    observer_high,
                    total_low,
                    total_high,
                } => index.gj_divergences.push((
                    e.tick,
                    *observer_low,
                    *observer_high,
                    *total_low,
                    *total_high,
                )),
                _ => {}
            }
        }
        index.store = store;
        Ok(index)
    }

    fn gf_sample(&self, obs: ValidatorId, tick: Tick) -> Option<Checkpoint> {
        self.observer_states
            .iter()
            .find(|(t, o, _, _, _)| *t == tick && *o == obs)
            .map(|(_, _, _, _, gf)| *gf)
    }

    /// First tick at which each block becomes confirmed for (observer, rule),
    /// via the frontier (plus the finality branch for the all-history rule).
    pub fn confirmation_times(
        &self,
        obs: ValidatorId,
        rule: ConfirmationRule,
    ) -> BTreeMap<BlockId, Tick> {
        let mut out = BTreeMap::new();
        let samples = match self.frontiers.get(&(obs, rule)) {
            Some(s) => s,
            None => return out,
        };
        for &(tick, frontier) in samples {
            let mut roots = vec![frontier];
            if rule == ConfirmationRule::Appendix {
                if let Some(gf) = self.gf_sample(obs, tick) {
                    roots.push(gf.block);
                }
            }
            for root in roots {
                let mut cur = root;
                loop {
                    if out.contains_key(&cur) {
                        break; // ancestors are already confirmed
                    }
                    out.insert(cur, tick);
                    match self.store.parent(cur) {
                        Ok(Some(p)) => cur = p,
                        _ => break,
                    }
                }
            }
        }
        out
    }

    /// Earliest sample tick at which `b` counts as a gated confirmation:
    /// it is confirmed, the security guard admits (b, t), and the horizon
    /// leaves enough room for the canonical-forever check.
    pub fn gated_confirmations(
        &self,
        obs: ValidatorId,
        rule: ConfirmationRule,
    ) -> BTreeMap<BlockId, Tick> {
        let first = self.confirmation_times(obs, rule);
        let samples = match self.frontiers.get(&(obs, rule)) {
            Some(s) => s.clone(),
            None => return BTreeMap::new(),
        };
        let mut out = BTreeMap::new();
        for (&b, &t0) in &first {
            if b == self.store.genesis() {
                continue;
            }
            for &(tick, _) in samples.iter().filter(|(t, _)| *t >= t0) {
                if self.sg(rule, obs, b, tick)
                    && self.horizon_admissible(tick)
                    && self.confirmed_at(obs, rule, b, tick)
                {
                    out.insert(b, tick);
                    break;
                }
            }
        }
        out
    }

    /// Is block `b` confirmed for (obs, rule) at sample `tick`?
    fn confirmed_at(&self, obs: ValidatorId, rule: ConfirmationRule, b: BlockId, tick: Tick) -> bool {
        let frontier = self
            .frontiers
            .get(&(obs, rule))
            .and_then(|s| s.iter().find(|(t, _)| *t == tick))
            .map(|(_, f)| *f);
        let mut ok = match frontier {
            Some(f) => self.store.is_ancestor(b, f).unwrap_or(false),
            None => false,
        };
        if !ok && rule == ConfirmationRule::Appendix {
            if let Some(gf) = self.gf_sample(obs, tick) {
                ok = self.store.is_ancestor(b, gf.block).unwrap_or(false);
            }
        }
        ok
    }

    /// The security-guard gate for a confirmation of `b` at `tick`.
    fn sg(&self, rule: ConfirmationRule, obs: ValidatorId, b: BlockId, tick: Tick) -> bool {
        let epoch_t = self.cfg.epoch_of_tick(tick);
        let base = self.store.epoch(b).map(|e| e >= epoch_t - 1).unwrap_or(false)
            && self.cfg.epoch_start(epoch_t - 1) >= self.ggst;
        if base {
            return true;
        }
        if rule == ConfirmationRule::Appendix {
            if let Some(gf) = self.gf_sample(obs, tick) {
                return self.store.is_ancestor(b, gf.block).unwrap_or(false);
            }
        }
        false
    }

    /// Horizon admissibility: the canonical-forever check needs at least two
    /// epochs of trace after the confirmation.
    fn horizon_admissible(&self, tick: Tick) -> bool {
        tick + 2 * self.cfg.slots_per_epoch * self.cfg.ticks_per_slot <= self.horizon_tick
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Violation {
    pub rule: String,
    pub observer: u32,
    pub block: String,
    pub confirm_tick: Tick,
    pub detail: String,
    /// Offset of the relevant sample in the trace timeline.
    pub at_tick: Tick,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default, PartialEq)]
pub struct RuleFragment {
    pub premises_clean: bool,
    pub checked_confirmations: usize,
    pub void_confirmations: usize,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AuditReport {
    /// Worst realized adversarial weight fraction over any committee window
    /// (exact rational, as a string), per balance assignment id.
    pub realized_beta_max: String,
    pub realized_beta_window: (Slot, Slot),
    pub beta_assumed: String,
    pub beta_window_clean: bool,
    pub slashed_total: u64,
    pub lambda_ok: bool,
    pub no_slashing: bool,
    pub no_churn: bool,
    pub rates_ok: bool,
    /// Per-epoch honest FFG vote mass ratio toward the epoch's best
    /// checkpoint, against honFFGratio(beta) (and the churn variant).
    pub hon_ffg: Vec<EpochFfgAudit>,
    pub hon_ffg_all_ok: bool,
    pub hon_ffg_var_all_ok: bool,
    /// Vote-inclusion liveness: premise epochs where the justifying block
    /// arrived in every honest view in time (standard and strict deadlines).
    pub liveness: Vec<EpochLiveness>,
    pub liveness_ok: bool,
    pub liveness_strict_ok: bool,
    pub lmd_beta_bound: String,
    pub lmd_beta_admissible: bool,
    pub hfc_beta_bound: String,
    pub hfc_beta_admissible: bool,
    pub appendix_beta_bound_lo: String,
    pub appendix_beta_bound_hi: String,
    pub appendix_beta_admissible: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochFfgAudit {
    pub epoch: Epoch,
    pub target: Option<String>,
    pub ratio: Option<String>,
    pub ok: bool,
    pub ok_var: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLiveness {
    pub epoch: Epoch,
    pub premise: bool,
    pub ok: bool,
    pub ok_strict: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PropertyReport {
    /// One justified checkpoint per epoch, gated on realized beta < 1/3 - eps.
    pub one_justified_per_epoch: bool,
    pub one_justified_gate_active: bool,
    /// gjView a strict descendant of gfView (boot-state equality exempt).
    pub gj_strictly_above_gf: bool,
    /// epoch(GU(b)) <= epoch(b) for every block.
    pub gu_epoch_bounded: bool,
    /// Every sampled fork-choice head descends from both view checkpoints
    /// (same gate as the one-justified property).
    pub head_respects_checkpoints: bool,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatencyRow {
    pub block: String,
    pub slot: Slot,
    pub rule: String,
    pub confirm_slot: Option<Slot>,
    pub latency_slots: Option<i64>,
    pub latency_seconds: Option<i64>,
    pub finalize_slot: Option<Slot>,
    pub finalize_seconds: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct LatencyAggregate {
    pub rule: String,
    pub confirmed_blocks: usize,
    pub unconfirmed_blocks: usize,
    pub min_slots: Option<i64>,
    pub p50_slots: Option<i64>,
    pub p90_slots: Option<i64>,
    pub max_slots: Option<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MonitorReport {
    pub scenario: String,
    pub seed: u64,
    pub audit: AuditReport,
    pub safety: BTreeMap<String, RuleFragment>,
    pub monotonicity: BTreeMap<String, RuleFragment>,
    pub properties: PropertyReport,
    pub latency: Vec<LatencyRow>,
    pub latency_aggregates: Vec<LatencyAggregate>,
    /// Count of raw safety-condition true -> false flips observed.
    pub raw_safe_flips: usize,
    /// Observed isConfirmed true -> false flips per rule (any observer),
    /// with no premise gating at all.
    pub any_confirmed_flips: BTreeMap<String, usize>,
    pub gj_weight_divergences: usize,
    pub qp_checked: usize,
    pub qp_violations: usize,
    pub pass: bool,
    pub strict_pass: bool,
}

impl MonitorReport {
    pub fn build(trace: &SimulationTrace) -> Result<MonitorReport, String> {
        let index = TraceIndex::build(trace)?;
        Ok(Self::from_index(&index))
    }

    pub fn from_index(index: &TraceIndex) -> MonitorReport {
        let audit = audit_assumptions(index);
        let mut safety = BTreeMap::new();
        let mut monotonicity = BTreeMap::new();
        let mut any_confirmed_flips = BTreeMap::new();
        for rule in &index.config.rules {
            safety.insert(rule.label().to_string(), check_safety(index, *rule, &audit));
            let (frag, flips) = check_monotonicity(index, *rule, &audit);
            monotonicity.insert(rule.label().to_string(), frag);
            any_confirmed_flips.insert(rule.label().to_string(), flips);
        }
        let properties = check_properties(index, &audit);
        let latency = latency_table(index);
        let latency_aggregates = aggregate_latencies(&latency);
        let raw_safe_flips = count_raw_flips(index);
        let (qp_checked, qp_violations) = check_qp_relation(index, &audit);

        let safety_ok = safety.values().all(|f| f.violations.is_empty());
        let mono_ok = monotonicity.values().all(|f| f.violations.is_empty());
        let props_ok = properties.violations.is_empty();
        let pass = safety_ok && mono_ok && props_ok && qp_violations == 0;
        let no_void = safety.values().all(|f| f.void_confirmations == 0)
            && monotonicity.values().all(|f| f.void_confirmations == 0);
        MonitorReport {
            scenario: index.config.name.clone(),
            seed: index.config.seed,
            audit,
            safety,
            monotonicity,
            properties,
            latency,
            latency_aggregates,
            raw_safe_flips,
            any_confirmed_flips,
            gj_weight_divergences: index.gj_divergences.len(),
            qp_checked,
            qp_violations,
            strict_pass: pass && no_void,
            pass,
        }
    }

    /// Summary rows (one per block per rule) as CSV.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "block,slot,rule,confirm_slot,latency_slots,latency_seconds,finalize_slot,finalize_seconds\n",
        );
        let fmt = |v: Option<i64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.latency {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.block,
                row.slot,
                row.rule,
                fmt(row.confirm_slot),
                fmt(row.latency_slots),
                fmt(row.latency_seconds),
                fmt(row.finalize_slot),
                fmt(row.finalize_seconds),
            ));
        }
        out
    }
}

/// Worst-case realized adversarial weight fraction over every committee
/// window, measured under a balance assignment.
fn realized_beta(
    index: &TraceIndex,
    eba: &crate::chain::Eba,
) -> (BigRational, (Slot, Slot)) {
    let mut worst = BigRational::zero();
    let mut worst_window = (0, 0);
    let horizon = index.config.horizon_slots;
    for s1 in 0..horizon {
        let mut acc = ValidatorSet::EMPTY;
        for s2 in s1..horizon {
            acc = acc.union(index.schedule.committee(s2));
            let total = eba.weight(acc);
            if total == 0 {
                continue;
            }
            let adv = eba.weight(acc.intersect(index.adversaries));
            let ratio = BigRational::new(adv.into(), total.into());
            if ratio > worst {
                worst = ratio;
                worst_window = (s1, s2);
            }
        }
    }
    (worst, worst_window)
}

fn audit_assumptions(index: &TraceIndex) -> AuditReport {
    let params = &index.params;
    let cfg = &index.cfg;
    let store = &index.store;

    // distinct balance assignments across justified checkpoints + genesis
    let mut ebas: Vec<crate::chain::Eba> = vec![store.eba(store.genesis()).unwrap().clone()];
    for &id in store.ids_in_insertion_order() {
        let meta = &store.runtime(id).unwrap().meta;
        for cp in &meta.unrealized_justified {
            if let Ok(e) = store.eba(cp.block) {
                if !ebas.contains(e) {
                    ebas.push(e.clone());
                }
            }
        }
    }
    let mut realized_max = BigRational::zero();
    let mut realized_window = (0, 0);
    for eba in &ebas {
        let (b, w) = realized_beta(index, eba);
        if b > realized_max {
            realized_max = b;
            realized_window = w;
        }
    }
    let beta_window_clean = realized_max <= params.beta;

    let slashed_total: u64 = index.slash_events.iter().map(|(_, _, _, cut)| *cut).sum();
    let lambda_ok = match &params.lambda {
        Some(l) => rat_int(slashed_total as u128) <= *l,
        None => true,
    };
    let no_slashing = index.slash_events.is_empty();
    let no_churn = index.config.churn_schedule.is_empty();
    let rates_ok = params.validate_rates(cfg.slots_per_epoch).is_ok();

    let (hon_ffg, liveness) = epoch_ffg_audit(index);
    let hon_ffg_all_ok = hon_ffg.iter().all(|a| a.ok);
    let hon_ffg_var_all_ok = hon_ffg.iter().all(|a| a.ok_var);
    let liveness_ok = liveness.iter().all(|l| l.ok);
    let liveness_strict_ok = liveness.iter().all(|l| l.ok_strict);

    let lmd_bound = params.lmd_beta_bound(cfg.slots_per_epoch);
    let hfc_bound = params.hfc_beta_bound();
    let (app_lo, app_hi) = params.appendix_beta_bound_bracket(cfg.slots_per_epoch);
    AuditReport {
        realized_beta_max: rational_to_string(&realized_max),
        realized_beta_window: realized_window,
        beta_assumed: rational_to_string(&params.beta),
        beta_window_clean,
        slashed_total,
        lambda_ok,
        no_slashing,
        no_churn,
        rates_ok,
        hon_ffg,
        hon_ffg_all_ok,
        hon_ffg_var_all_ok,
        liveness,
        liveness_ok,
        liveness_strict_ok,
        lmd_beta_bound: rational_to_string(&lmd_bound),
        lmd_beta_admissible: params.beta < lmd_bound,
        hfc_beta_bound: rational_to_string(&hfc_bound),
        hfc_beta_admissible: params.beta < hfc_bound,
        appendix_beta_bound_lo: rational_to_string(&app_lo),
        appendix_beta_bound_hi: rational_to_string(&app_hi),
        appendix_beta_admissible: params.beta < app_lo,
    }
}

/// Per-epoch honest FFG mass toward the epoch's best checkpoint, plus the
/// vote-inclusion liveness checks.
fn epoch_ffg_audit(index: &TraceIndex) -> (Vec<EpochFfgAudit>, Vec<EpochLiveness>) {
    let cfg = &index.cfg;
    let store = &index.store;
    let params = &index.params;
    let mut ffg_out = Vec::new();
    let mut live_out = Vec::new();
    let last_full_epoch = cfg.epoch_of_slot(index.config.horizon_slots) - 1;
    let need = hon_ffg_ratio(&params.beta);
    let need_var = hon_ffg_ratio_var(
        &params.beta,
        &params.reward_rate,
        &params.penalty_rate,
        &params.exit_rate,
    );

    for e in 0..=last_full_epoch {
        if cfg.epoch_start(e) < index.ggst {
            continue; // pre-stabilization epochs are out of scope
        }
        // per target checkpoint at epoch e: honest distinct signers of sent
        // votes with the chain-prescribed source
        let mut best: Option<(Checkpoint, BigRational)> = None;
        let mut by_target: BTreeMap<Checkpoint, ValidatorSet> = BTreeMap::new();
        for (_, vote) in &index.ffg_sent {
            if vote.target.epoch == e && index.honest.contains(vote.signer) {
                let expected_source =
                    crate::ffg::voting_source(store, vote.target.block, e).ok();
                if expected_source == Some(vote.source) {
                    by_target.entry(vote.target).or_default().insert(vote.signer);
                }
            }
        }
        for (cp, signers) in &by_target {
            let eba = match store.eba(cp.block) {
                Ok(e) => e,
                Err(_) => continue,
            };
            let hon_total = eba.weight(eba.total_validator_set().intersect(index.honest));
            if hon_total == 0 {
                continue;
            }
            let ratio = BigRational::new(eba.weight(*signers).into(), hon_total.into());
            if best.as_ref().map(|(_, r)| ratio > *r).unwrap_or(true) {
                best = Some((*cp, ratio));
            }
        }
        let (target, ratio) = match &best {
            Some((cp, r)) => (Some(format!("({}, {})", cp.block.short(), cp.epoch)), Some(r)),
            None => (None, None),
        };
        ffg_out.push(EpochFfgAudit {
            epoch: e,
            target,
            ratio: ratio.map(rational_to_string),
            ok: ratio.map(|r| *r > need).unwrap_or(false),
            ok_var: ratio.map(|r| *r > need_var).unwrap_or(false),
        });

        // liveness: if some epoch-e checkpoint reached a 2/3 sent mass by
        // the end of the epoch, a block justifying it must reach every
        // honest view in time.
        let mut premise_cp: Option<Checkpoint> = None;
        for cp in by_target.keys() {
            let mut sent_signers = ValidatorSet::EMPTY;
            for (tick, vote) in &index.ffg_sent {
                if vote.target == *cp && *tick < cfg.epoch_start(e + 1) {
                    sent_signers.insert(vote.signer);
                }
            }
            if let Ok(eba) = store.eba(cp.block) {
                if 3 * eba.weight(sent_signers) >= 2 * eba.total_weight() {
                    premise_cp = Some(*cp);
                    break;
                }
            }
        }
        let (mut ok, mut ok_strict) = (true, true);
        if let Some(cp) = premise_cp {
            let deadline = cfg.epoch_start(e + 2);
            let strict_deadline = cfg.slot_start(cfg.last_slot(e + 1));
            if deadline <= index.horizon_tick {
                let carriers: Vec<BlockId> = store
                    .ids_in_insertion_order()
                    .iter()
                    .copied()
                    .filter(|&b| {
                        store.epoch(b).map(|be| be < e + 2).unwrap_or(false)
                            && store
                                .runtime(b)
                                .map(|rt| rt.meta.unrealized_justified.contains(&cp))
                                .unwrap_or(false)
                    })
                    .collect();
                for v in index.honest.iter() {
                    let got = carriers.iter().any(|&b| {
                        index
                            .block_delivery
                            .get(&(v, b))
                            .map(|&t| t <= deadline)
                            .unwrap_or(false)
                    });
                    let got_strict = carriers.iter().any(|&b| {
                        index
                            .block_delivery
                            .get(&(v, b))
                            .map(|&t| t <= strict_deadline)
                            .unwrap_or(false)
                    });
                    ok &= got;
                    ok_strict &= got_strict;
                }
            }
        }
        live_out.push(EpochLiveness { epoch: e, premise: premise_cp.is_some(), ok, ok_strict });
    }
    (ffg_out, live_out)
}

fn safety_premises_clean(rule: ConfirmationRule, audit: &AuditReport, params: &SafetyParams) -> bool {
    let third = frac(1, 3) - &params.safety_decay;
    let beta_ok = params.beta < third;
    match rule {
        ConfirmationRule::Lmd => {
            audit.no_churn && audit.beta_window_clean && audit.no_slashing
        }
        ConfirmationRule::Hfc => {
            audit.no_churn
                && audit.beta_window_clean
                && beta_ok
                && audit.lambda_ok
                && audit.liveness_ok
        }
        ConfirmationRule::Churn => {
            audit.beta_window_clean && beta_ok && audit.lambda_ok && audit.rates_ok && audit.liveness_ok
        }
        ConfirmationRule::Appendix => {
            audit.no_churn && audit.beta_window_clean && beta_ok && audit.lambda_ok
        }
    }
}

fn monotonicity_premises_clean(
    rule: ConfirmationRule,
    audit: &AuditReport,
    params: &SafetyParams,
) -> bool {
    if !safety_premises_clean(rule, audit, params) {
        return false;
    }
    match rule {
        ConfirmationRule::Lmd => audit.lmd_beta_admissible,
        ConfirmationRule::Hfc => {
            audit.hfc_beta_admissible && audit.hon_ffg_all_ok && audit.liveness_strict_ok
        }
        ConfirmationRule::Churn => {
            audit.hfc_beta_admissible && audit.hon_ffg_var_all_ok && audit.liveness_strict_ok
        }
        ConfirmationRule::Appendix => audit.appendix_beta_admissible && audit.liveness_strict_ok,
    }
}

/// Maintains the maximal elements of an ancestor-closed block set.
struct Antichain {
    maximal: Vec<BlockId>,
}

impl Antichain {
    fn new() -> Self {
        Antichain { maximal: Vec::new() }
    }

    fn insert(&mut self, store: &BlockStore, b: BlockId) {
        if self.maximal.iter().any(|&m| store.is_ancestor(b, m).unwrap_or(false)) {
            return;
        }
        self.maximal.retain(|&m| !store.is_ancestor(m, b).unwrap_or(false));
        self.maximal.push(b);
    }
}

fn check_safety(index: &TraceIndex, rule: ConfirmationRule, audit: &AuditReport) -> RuleFragment {
    let clean = safety_premises_clean(rule, audit, &index.params);
    let mut frag = RuleFragment { premises_clean: clean, ..Default::default() };

    // earliest gated confirmation per block across observers
    let mut first_confirm: BTreeMap<BlockId, Tick> = BTreeMap::new();
    let mut total_confirmations = 0usize;
    for &obs in &index.observers {
        total_confirmations += index
            .confirmation_times(obs, rule)
            .keys()
            .filter(|&&b| b != index.store.genesis())
            .count();
        for (b, t) in index.gated_confirmations(obs, rule) {
            let slot = first_confirm.entry(b).or_insert(t);
            *slot = (*slot).min(t);
        }
    }
    if !clean {
        frag.void_confirmations = total_confirmations;
        return frag;
    }
    frag.checked_confirmations = first_confirm.len();
    frag.void_confirmations = total_confirmations.saturating_sub(first_confirm.len());

    // sweep head samples in tick order, growing the confirmed antichain
    let mut pending: Vec<(Tick, BlockId)> =
        first_confirm.iter().map(|(&b, &t)| (t, b)).collect();
    pending.sort();
    let mut next = 0usize;
    let mut chain = Antichain::new();
    let mut samples = index.head_samples.clone();
    samples.sort();
    for (tick, validator, head) in samples {
        while next < pending.len() && pending[next].0 <= tick {
            chain.insert(&index.store, pending[next].1);
            next += 1;
        }
        for &m in &chain.maximal {
            if !index.store.is_ancestor(m, head).unwrap_or(false) {
                frag.violations.push(Violation {
                    rule: rule.label().into(),
                    observer: validator.0,
                    block: m.short(),
                    confirm_tick: first_confirm.get(&m).copied().unwrap_or_default(),
                    detail: format!(
                        "confirmed block not canonical: head {} at validator {validator}",
                        head.short()
                    ),
                    at_tick: tick,
                });
            }
        }
        if !frag.violations.is_empty() {
            break; // first violation carries the reproduction pointer
        }
    }
    frag
}

fn check_monotonicity(
    index: &TraceIndex,
    rule: ConfirmationRule,
    audit: &AuditReport,
) -> (RuleFragment, usize) {
    let clean = monotonicity_premises_clean(rule, audit, &index.params);
    let mut frag = RuleFragment { premises_clean: clean, ..Default::default() };

    // ungated flip count (used by the counterexample replays)
    let mut any_flips = 0usize;
    for &obs in &index.observers {
        let samples = match index.frontiers.get(&(obs, rule)) {
            Some(s) => s,
            None => continue,
        };
        let confirm_times = index.confirmation_times(obs, rule);
        for (&b, &t0) in &confirm_times {
            let mut was = false;
            for &(tick, _) in samples.iter().filter(|(t, _)| *t >= t0) {
                let now = index.confirmed_at(obs, rule, b, tick);
                if was && !now {
                    any_flips += 1;
                    break;
                }
                was = now;
            }
        }

        // premise-gated monotonicity violations
        if !clean {
            frag.void_confirmations += confirm_times.len();
            continue;
        }
        let mut gated: Vec<(Tick, BlockId)> =
            index.gated_confirmations(obs, rule).into_iter().map(|(b, t)| (t, b)).collect();
        frag.checked_confirmations += gated.len();
        frag.void_confirmations += confirm_times.len().saturating_sub(gated.len());
        gated.sort();
        let mut next = 0usize;
        let mut chain = Antichain::new();
        for &(tick, _) in samples {
            while next < gated.len() && gated[next].0 <= tick {
                chain.insert(&index.store, gated[next].1);
                next += 1;
            }
            for &m in &chain.maximal {
                if !index.confirmed_at(obs, rule, m, tick) {
                    frag.violations.push(Violation {
                        rule: rule.label().into(),
                        observer: obs.0,
                        block: m.short(),
                        confirm_tick: gated
                            .iter()
                            .find(|(_, b)| *b == m)
                            .map(|(t, _)| *t)
                            .unwrap_or_default(),
                        detail: "confirmed block dropped from the confirmed set".into(),
                        at_tick: tick,
                    });
                }
            }
            if !frag.violations.is_empty() {
                break;
            }
        }
    }
    (frag, any_flips)
}

fn check_properties(index: &TraceIndex, audit: &AuditReport) -> PropertyReport {
    let store = &index.store;
    let mut violations = Vec::new();

    // P7: epoch(GU(b)) <= epoch(b)
    let mut gu_ok = true;
    for &b in store.ids_in_insertion_order() {
        let gu = store.runtime(b).unwrap().meta.gu;
        if gu.epoch > store.epoch(b).unwrap() {
            gu_ok = false;
            violations.push(format!("epoch(GU({})) = {} exceeds block epoch", b.short(), gu.epoch));
        }
    }

    // P1: one justified checkpoint per epoch, when realized beta is below
    // 1/3 - safety decay
    let realized =
        crate::simnet::config::parse_rational(&audit.realized_beta_max).unwrap_or_default();
    let gate = realized < frac(1, 3) - &index.params.safety_decay;
    let mut one_per_epoch = true;
    if gate {
        let mut by_epoch: BTreeMap<Epoch, BTreeSet<BlockId>> = BTreeMap::new();
        for &b in store.ids_in_insertion_order() {
            for cp in &store.runtime(b).unwrap().meta.unrealized_justified {
                by_epoch.entry(cp.epoch).or_default().insert(cp.block);
            }
        }
        for (e, blocks) in by_epoch {
            if blocks.len() > 1 {
                one_per_epoch = false;
                violations.push(format!("epoch {e} has {} justified checkpoints", blocks.len()));
            }
        }
    }

    // P2: gjView strictly above gfView, except the genesis boot state
    let genesis_cp = store.genesis_checkpoint();
    let mut gj_above = true;
    for &(tick, obs, _, gj, gf) in &index.observer_states {
        let boot = gj == genesis_cp && gf == genesis_cp;
        let strict = gf.epoch < gj.epoch
            && store.checkpoint_of(gj.block, gf.epoch).map(|c| c == gf).unwrap_or(false);
        if !(boot || strict) {
            gj_above = false;
            violations.push(format!(
                "observer {obs} at tick {tick}: gj ({}, {}) not strictly above gf ({}, {})",
                gj.block.short(),
                gj.epoch,
                gf.block.short(),
                gf.epoch
            ));
        }
    }

    // heads never leave the checkpointed branch (same gate as P1)
    let mut head_ok = true;
    if gate {
        for &(tick, obs, head, gj, gf) in &index.observer_states {
            let above_gj = store.is_ancestor(gj.block, head).unwrap_or(false);
            let above_gf = store.is_ancestor(gf.block, head).unwrap_or(false);
            if !(above_gj && above_gf) {
                head_ok = false;
                violations.push(format!(
                    "observer {obs} at tick {tick}: head {} escapes the checkpoints",
                    head.short()
                ));
            }
        }
    }

    PropertyReport {
        one_justified_per_epoch: one_per_epoch,
        one_justified_gate_active: gate,
        gj_strictly_above_gf: gj_above,
        gu_epoch_bounded: gu_ok,
        head_respects_checkpoints: head_ok,
        violations,
    }
}

fn latency_table(index: &TraceIndex) -> Vec<LatencyRow> {
    let store = &index.store;
    let cfg = &index.cfg;
    let obs = match index.observers.first() {
        Some(&o) => o,
        None => return Vec::new(),
    };
    let mut fin_time: BTreeMap<BlockId, Tick> = BTreeMap::new();
    for &(tick, o, _, _, gf) in &index.observer_states {
        if o != obs {
            continue;
        }
        let mut cur = gf.block;
        loop {
            if fin_time.contains_key(&cur) {
                break;
            }
            fin_time.insert(cur, tick);
            match store.parent(cur) {
                Ok(Some(p)) => cur = p,
                _ => break,
            }
        }
    }
    let mut rows = Vec::new();
    for rule in &index.config.rules {
        let confirm = index.confirmation_times(obs, *rule);
        for &b in store.ids_in_insertion_order() {
            if b == store.genesis() {
                continue;
            }
            let slot = store.slot(b).unwrap();
            let confirm_slot = confirm.get(&b).map(|&t| cfg.slot_of(t));
            let latency_slots = confirm_slot.map(|s| s - slot);
            let finalize_slot = fin_time.get(&b).map(|&t| cfg.slot_of(t));
            rows.push(LatencyRow {
                block: b.short(),
                slot,
                rule: rule.label().into(),
                confirm_slot,
                latency_slots,
                latency_seconds: latency_slots.map(|l| l * cfg.ticks_per_slot),
                finalize_slot,
                finalize_seconds: finalize_slot.map(|f| (f - slot) * cfg.ticks_per_slot),
            });
        }
    }
    rows
}

fn aggregate_latencies(rows: &[LatencyRow]) -> Vec<LatencyAggregate> {
    let mut by_rule: BTreeMap<&str, Vec<i64>> = BTreeMap::new();
    let mut unconfirmed: BTreeMap<&str, usize> = BTreeMap::new();
    for row in rows {
        match row.latency_slots {
            Some(l) => by_rule.entry(&row.rule).or_default().push(l),
            None => *unconfirmed.entry(&row.rule).or_default() += 1,
        }
    }
    let mut out = Vec::new();
    for (rule, mut lats) in by_rule {
        lats.sort_unstable();
        let pick = |q: usize| lats.get(lats.len().saturating_sub(1) * q / 100).copied();
        out.push(LatencyAggregate {
            rule: rule.to_string(),
            confirmed_blocks: lats.len(),
            unconfirmed_blocks: unconfirmed.get(rule).copied().unwrap_or(0),
            min_slots: lats.first().copied(),
            p50_slots: pick(50),
            p90_slots: pick(90),
            max_slots: lats.last().copied(),
        });
    }
    out
}

fn count_raw_flips(index: &TraceIndex) -> usize {
    let mut last: BTreeMap<(ValidatorId, BlockId), bool> = BTreeMap::new();
    let mut flips = 0;
    for &(_, obs, block, pass) in &index.raw_safe {
        if let Some(prev) = last.insert((obs, block), pass) {
            if prev && !pass {
                flips += 1;
            }
        }
    }
    flips
}

/// Spot-check P >= (Q - beta) / (1 - beta) on logged samples, valid whenever
/// the realized window fraction stays within the assumed beta.
fn check_qp_relation(index: &TraceIndex, audit: &AuditReport) -> (usize, usize) {
    if !audit.beta_window_clean || index.params.beta >= BigRational::one() {
        return (0, 0);
    }
    let beta = &index.params.beta;
    let mut checked = 0;
    let mut violations = 0;
    for (_, _, _, q, p) in &index.qp_samples {
        let q = match crate::simnet::config::parse_rational(q) {
            Ok(v) => v,
            Err(_) => continue,
        };
        let p = match crate::simnet::config::parse_rational(p) {
            Ok(v) => v,
            Err(_) => continue,
        };
        checked += 1;
        let bound = (q - beta) / (BigRational::one() - beta);
        if p < bound {
            violations += 1;
        }
    }
    (checked, violations)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::{ObserversSpec, ScenarioConfig, Simulation};

    fn run(config: &ScenarioConfig) -> MonitorReport {
        let trace = Simulation::run(config).unwrap();
        MonitorReport::build(&trace).unwrap()
    }

    #[test]
    fn fault_free_trace_is_clean() {
        let config = ScenarioConfig {
            name: "clean".into(),
            num_validators: 8,
            slots_per_epoch: 4,
            horizon_slots: 24,
            delta: 2,
            observers: ObserversSpec::Ids(vec![0, 1]),
            ..Default::default()
        };
        let report = run(&config);
        assert_eq!(report.audit.realized_beta_max, "0");
        assert!(report.audit.beta_window_clean);
        for frag in report.safety.values() {
            assert!(frag.premises_clean);
            assert!(frag.violations.is_empty(), "{:?}", frag.violations);
            assert!(frag.checked_confirmations > 0);
        }
        for frag in report.monotonicity.values() {
            assert!(frag.violations.is_empty());
        }
        assert!(report.properties.gu_epoch_bounded);
        assert!(report.properties.gj_strictly_above_gf);
        assert!(report.pass);
        // blocks confirm fast in the fault-free run
        let lmd_latencies: Vec<i64> = report
            .latency
            .iter()
            .filter(|r| r.rule == "hfc" && r.latency_slots.is_some())
            .filter_map(|r| r.latency_slots)
            .collect();
        assert!(!lmd_latencies.is_empty());
    }

    #[test]
    fn offline_replay_matches_inline_report() {
        let config = ScenarioConfig {
            name: "offline".into(),
            num_validators: 8,
            slots_per_epoch: 4,
            horizon_slots: 12,
            delta: 2,
            observers: ObserversSpec::Ids(vec![0]),
            ..Default::default()
        };
        let trace = Simulation::run(&config).unwrap();
        let inline = MonitorReport::build(&trace).unwrap();
        let jsonl = trace.to_jsonl();
        let reparsed = SimulationTrace::from_jsonl(&jsonl).unwrap();
        let offline = MonitorReport::build(&reparsed).unwrap();
        assert_eq!(inline, offline);
    }
}
