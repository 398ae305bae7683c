//! Deterministic discrete-event simulator: partial-synchrony network
//! (GST, delta), honest validator processes, adversary strategies and the
//! confirmation-rule executors co-located with honest validators.

pub mod adversary;
pub mod config;
pub mod replay;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

pub use adversary::{AdversaryStrategy, DefectVote, ScriptedPlan, WithheldProposal};
pub use config::{
    AdversaryConfig, ChurnEntry, ConfigError, ObserversSpec, ParamsConfig, ScenarioConfig,
    WeightsSpec,
};

use crate::chain::{
    BlockDraft, BlockId, BlockStore, ChainConfig, CommitteeSchedule, Slot, Tick,
    ValidatorId, ValidatorSet,
};
use crate::confirmation::{
    p_indicator_oracle, q_indicator, ConfirmationCache, ConfirmationRule, Evaluator, SafetyParams,
};
use crate::ffg::{gf_view, gj_view, voting_source, FfgVote};
use crate::fork_choice::{lmd_ghost_hfc, BoostState, GhostVote};
use crate::simnet::config::rational_to_string;
use crate::trace::{EventPayload, MsgRef, SimulationTrace, TraceEvent};
use crate::view::View;

/// Named counterexample construction to replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CounterexampleName {
    /// Divergent GJ-derived total weights across observers.
    GjWeight,
    /// The raw safety condition flipping true -> false one slot later.
    NonMonotoneQ,
}

impl std::str::FromStr for CounterexampleName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "gj-weight" => Ok(CounterexampleName::GjWeight),
            "non-monotone-q" => Ok(CounterexampleName::NonMonotoneQ),
            other => Err(format!("unknown counterexample '{other}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum EnginePayload {
    Deliver { msg: MsgRef, to: ValidatorId },
    SlotStart(Slot),
    VoteDeadline(Slot),
    AdversaryRelease(Slot),
    SlotEval(Slot),
}

fn rank(p: &EnginePayload) -> u8 {
    match p {
        EnginePayload::Deliver { .. } => 0,
        EnginePayload::SlotStart(_) => 1,
        EnginePayload::VoteDeadline(_) => 2,
        EnginePayload::AdversaryRelease(_) => 3,
        EnginePayload::SlotEval(_) => 4,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct QueuedEvent {
    tick: Tick,
    rank: u8,
    seq: u64,
    payload: EnginePayload,
}

#[derive(Debug, Default)]
struct AdversaryRuntime {
    /// WithholdRelease: tip of the private chain and everything unpublished.
    private_tip: Option<BlockId>,
    withheld: Vec<(ValidatorId, MsgRef)>,
    /// ConflictingFfg: tip of the public fork.
    fork_tip: Option<BlockId>,
    /// Scripted: newest block proposed by each partition group.
    latest_by_group: BTreeMap<u8, BlockId>,
    /// Scripted: withheld proposals by release slot.
    scripted_releases: BTreeMap<Slot, Vec<(BlockId, WithheldProposal)>>,
}

pub struct Simulation {
    config: ScenarioConfig,
    cfg: ChainConfig,
    params: SafetyParams,
    store: BlockStore,
    schedule: CommitteeSchedule,
    views: Vec<View>,
    boosts: Vec<BoostState>,
    caches: BTreeMap<(ValidatorId, ConfirmationRule), ConfirmationCache>,
    queue: BinaryHeap<Reverse<QueuedEvent>>,
    seq: u64,
    events: Vec<TraceEvent>,
    adversary_set: ValidatorSet,
    honest: Vec<ValidatorId>,
    observers: Vec<ValidatorId>,
    adv: AdversaryRuntime,
    net_rng: ChaCha20Rng,
    gst: Tick,
    delta: i64,
    horizon_tick: Tick,
}

impl Simulation {
    /// Executes the scenario to its horizon and returns the complete trace.
    /// Bit-identical traces for identical configs.
    pub fn run(config: &ScenarioConfig) -> Result<SimulationTrace, ConfigError> {
        let mut sim = Simulation::new(config)?;
        sim.run_loop();
        Ok(sim.finish())
    }

    fn new(config: &ScenarioConfig) -> Result<Self, ConfigError> {
        let params = config.validate()?;
        let cfg = config.chain_config();
        let n = config.num_validators as usize;
        let genesis_eba = config.weights.to_eba(n)?;
        let churn = config.churn();
        let store =
            BlockStore::new(cfg, genesis_eba.clone(), churn.clone(), params.slash_penalty.clone());

        let num_epochs = cfg.epoch_of_slot(config.horizon_slots) as usize + 3;
        let schedule = match &config.pinned_committees {
            Some(tables) => {
                let tables: Vec<Vec<Vec<ValidatorId>>> = tables
                    .iter()
                    .map(|epoch| {
                        epoch
                            .iter()
                            .map(|c| c.iter().map(|&v| ValidatorId(v)).collect())
                            .collect()
                    })
                    .collect();
                CommitteeSchedule::pinned(cfg, tables, config.pinned_proposer_map())
                    .map_err(|m| ConfigError { field: "pinned_committees".into(), message: m })?
            }
            None => CommitteeSchedule::derive(config.seed, cfg, &genesis_eba, &churn, num_epochs),
        };

        let adversary_ids = config.adversary_ids();
        let adversary_set = ValidatorSet::from_ids(adversary_ids.iter().copied());
        let honest: Vec<ValidatorId> =
            (0..config.num_validators).map(ValidatorId).filter(|v| !adversary_set.contains(*v)).collect();
        let observers = config.observer_ids();

        let mut net_seed = Sha256::new();
        net_seed.update(config.seed.to_be_bytes());
        net_seed.update(b"network");
        let net_rng = ChaCha20Rng::from_seed(net_seed.finalize().into());

        let mut caches = BTreeMap::new();
        for &obs in &observers {
            for rule in &config.rules {
                caches.insert((obs, *rule), ConfirmationCache::default());
            }
        }

        let mut sim = Simulation {
            cfg,
            params,
            views: vec![View::genesis(&store); n],
            boosts: vec![BoostState::default(); n],
            caches,
            queue: BinaryHeap::new(),
            seq: 0,
            events: Vec::new(),
            adversary_set,
            honest,
            observers,
            adv: AdversaryRuntime::default(),
            net_rng,
            gst: config.gst,
            delta: config.delta,
            horizon_tick: cfg.slot_start(config.horizon_slots),
            store,
            schedule,
            config: config.clone(),
        };

        for s in 0..=config.horizon_slots {
            sim.push(cfg.slot_start(s), EnginePayload::SlotStart(s));
            sim.push(cfg.slot_start(s), EnginePayload::SlotEval(s));
            if s < config.horizon_slots {
                sim.push(cfg.vote_deadline(s), EnginePayload::VoteDeadline(s));
            }
        }
        if let AdversaryStrategy::WithholdRelease { release_slot } = &config.adversary.strategy {
            sim.push(cfg.slot_start(*release_slot), EnginePayload::AdversaryRelease(*release_slot));
        }
        if let AdversaryStrategy::Scripted(plan) = &config.adversary.strategy {
            let mut release_slots = BTreeSet::new();
            for wp in &plan.withheld_proposals {
                release_slots.insert(cfg.slot_of(wp.release_tick));
            }
            for s in release_slots {
                // the release event carries the slot whose proposals it frees
                sim.push_at_tick_for_scripted_release(s);
            }
        }
        Ok(sim)
    }

    fn push_at_tick_for_scripted_release(&mut self, slot: Slot) {
        if let AdversaryStrategy::Scripted(plan) = &self.config.adversary.strategy {
            let ticks: BTreeSet<Tick> = plan
                .withheld_proposals
                .iter()
                .filter(|wp| self.cfg.slot_of(wp.release_tick) == slot)
                .map(|wp| wp.release_tick)
                .collect();
            for t in ticks {
                self.push(t, EnginePayload::AdversaryRelease(slot));
            }
        }
    }

    fn push(&mut self, tick: Tick, payload: EnginePayload) {
        let rank = rank(&payload);
        self.queue.push(Reverse(QueuedEvent { tick, rank, seq: self.seq, payload }));
        self.seq += 1;
    }

    fn log(&mut self, tick: Tick, ev: EventPayload) {
        self.events.push(TraceEvent { tick, ev });
    }

    fn is_honest(&self, v: ValidatorId) -> bool {
        !self.adversary_set.contains(v)
    }

    fn n(&self) -> u32 {
        self.config.num_validators
    }

    /// Legal delivery window cap for a message sent at `tick`.
    fn window_cap(&self, tick: Tick) -> Tick {
        tick.max(self.gst) + self.delta
    }

    fn scripted_delay(&self, plan: &ScriptedPlan, from: ValidatorId, to: ValidatorId, tick: Tick) -> Tick {
        if from == to {
            return 0;
        }
        let cap = self.window_cap(tick) - tick;
        if tick < self.gst {
            if plan.group_of(from.0) == plan.group_of(to.0) {
                plan.pre_gst_same_group_delay.min(cap)
            } else {
                cap
            }
        } else {
            plan.post_gst_delay.min(cap)
        }
    }

    /// Point-to-all broadcast with per-recipient delays inside the legal
    /// window [t, max(t, GST) + delta].
    fn broadcast(&mut self, from: ValidatorId, tick: Tick, msg: MsgRef) {
        let n = self.n();
        let scripted = match &self.config.adversary.strategy {
            AdversaryStrategy::Scripted(plan) => Some(plan.clone()),
            _ => None,
        };
        for to in (0..n).map(ValidatorId) {
            let delay = match &scripted {
                Some(plan) => self.scripted_delay(plan, from, to, tick),
                None => {
                    if to == from {
                        0
                    } else {
                        let cap = self.window_cap(tick) - tick;
                        self.net_rng.gen_range(0..=cap)
                    }
                }
            };
            self.push(tick + delay, EnginePayload::Deliver { msg: msg.clone(), to });
        }
    }

    /// Delivery to a chosen subset (adversary private traffic).
    fn deliver_to(&mut self, recipients: &[ValidatorId], tick: Tick, msg: MsgRef) {
        for &to in recipients {
            self.push(tick, EnginePayload::Deliver { msg: msg.clone(), to });
        }
    }

    fn adversary_members(&self) -> Vec<ValidatorId> {
        self.adversary_set.iter().collect()
    }

    fn run_loop(&mut self) {
        while let Some(Reverse(ev)) = self.queue.pop() {
            if ev.tick > self.horizon_tick {
                break;
            }
            match ev.payload {
                EnginePayload::Deliver { msg, to } => self.on_deliver(ev.tick, msg, to),
                EnginePayload::SlotStart(s) => self.on_slot_start(ev.tick, s),
                EnginePayload::VoteDeadline(s) => self.on_vote_deadline(ev.tick, s),
                EnginePayload::AdversaryRelease(s) => self.on_release(ev.tick, s),
                EnginePayload::SlotEval(s) => self.on_slot_eval(ev.tick, s),
            }
        }
    }

    fn finish(self) -> SimulationTrace {
        SimulationTrace {
            config: serde_json::to_value(&self.config).expect("config serializes"),
            ggst: self.cfg.ggst(self.gst),
            horizon_slots: self.config.horizon_slots,
            events: self.events,
        }
    }

    // --- event handlers ---

    fn on_deliver(&mut self, tick: Tick, msg: MsgRef, to: ValidatorId) {
        self.log(tick, EventPayload::Deliver { to, msg: msg.clone() });
        match msg {
            MsgRef::Block { id } => {
                let admitted =
                    self.views[to.index()].add_block(&self.store, &self.schedule, id, tick);
                for b in admitted {
                    let block = self.store.get(b).expect("admitted block");
                    let slot_now = self.cfg.slot_of(tick);
                    if block.slot == slot_now
                        && tick < self.cfg.vote_deadline(slot_now)
                        && self.boosts[to.index()].boosted.is_none()
                    {
                        self.boosts[to.index()].grant(b);
                    }
                }
            }
            MsgRef::Ghost { vote } => self.views[to.index()].add_ghost_vote(vote),
            MsgRef::Ffg { vote } => self.views[to.index()].add_ffg_vote(vote),
        }
    }

    fn head_of(&self, v: ValidatorId, t: Tick) -> BlockId {
        lmd_ghost_hfc(
            &self.store,
            &self.schedule,
            &self.views[v.index()],
            t,
            self.boosts[v.index()],
            &self.params.boost_fraction,
            self.params.subtree_boost,
        )
    }

    fn on_slot_start(&mut self, tick: Tick, slot: Slot) {
        self.log(tick, EventPayload::SlotStart { slot });
        for b in &mut self.boosts {
            b.clear();
        }
        if slot == 0 || slot >= self.config.horizon_slots {
            return;
        }
        let proposer = match self.schedule.proposer(slot) {
            Some(p) => p,
            None => return,
        };
        if self.is_honest(proposer) {
            self.propose(proposer, slot, tick, None, true);
        } else {
            self.adversary_propose(proposer, slot, tick);
        }
    }

    /// Builds a block for `proposer` on `parent_override` (or its own head),
    /// embedding every known-unincluded FFG vote and slashing evidence.
    /// Returns the block id; broadcasts when `publish`.
    fn propose(
        &mut self,
        proposer: ValidatorId,
        slot: Slot,
        tick: Tick,
        parent_override: Option<BlockId>,
        publish: bool,
    ) -> Option<BlockId> {
        let parent = match parent_override {
            Some(p) => p,
            None => self.head_of(proposer, tick),
        };
        if self.store.slot(parent).map(|s| s >= slot).unwrap_or(true) {
            return None; // cannot build a valid child on this parent
        }
        let view = &self.views[proposer.index()];
        let included = &self.store.runtime(parent).expect("parent").meta.included_votes;
        let ffg_votes: Vec<FfgVote> =
            view.ffg_votes().filter(|v| !included.contains(v)).copied().collect();
        let already_slashed = self.store.runtime(parent).expect("parent").slashed;
        let evidence: Vec<ValidatorId> =
            view.equivocators().difference(already_slashed).iter().collect();
        let draft = BlockDraft {
            slot,
            proposer: Some(proposer),
            parent: Some(parent),
            ffg_votes: ffg_votes.clone(),
            slashing_evidence: evidence.clone(),
            payload: 0,
        };
        let id = match self.store.insert(draft) {
            Ok(id) => id,
            Err(_) => return None,
        };
        self.log(
            tick,
            EventPayload::Block {
                id,
                slot,
                proposer: Some(proposer),
                parent: Some(parent),
                ffg_votes,
                slashings: evidence,
                payload: 0,
            },
        );
        for (v, cut) in self.store.runtime(id).expect("new block").slash_cuts.clone() {
            self.log(tick, EventPayload::SlashIncluded { block: id, validator: v, cut });
        }
        if let AdversaryStrategy::Scripted(plan) = &self.config.adversary.strategy {
            let group = plan.group_of(proposer.0);
            let newest = match self.adv.latest_by_group.get(&group) {
                Some(&old) => self.store.order_key(id) > self.store.order_key(old),
                None => true,
            };
            if newest {
                self.adv.latest_by_group.insert(group, id);
            }
        }
        if publish {
            self.broadcast(proposer, tick, MsgRef::Block { id });
        }
        Some(id)
    }

    fn adversary_propose(&mut self, proposer: ValidatorId, slot: Slot, tick: Tick) {
        match self.config.adversary.strategy.clone() {
            AdversaryStrategy::Silent => {}
            AdversaryStrategy::Equivocate { .. } => {
                self.propose(proposer, slot, tick, None, true);
            }
            AdversaryStrategy::WithholdRelease { release_slot } => {
                let parent = self.adv.private_tip;
                if let Some(id) = self.propose(proposer, slot, tick, parent, false) {
                    self.adv.private_tip = Some(id);
                    self.log(
                        tick,
                        EventPayload::AdversaryAction {
                            actor: proposer,
                            action: format!("withhold block at slot {slot} until slot {release_slot}"),
                        },
                    );
                    let members = self.adversary_members();
                    self.deliver_to(&members, tick, MsgRef::Block { id });
                    self.adv.withheld.push((proposer, MsgRef::Block { id }));
                }
            }
            AdversaryStrategy::ConflictingFfg => {
                let parent = match self.adv.fork_tip {
                    Some(tip) => Some(tip),
                    None => {
                        let head = self.head_of(proposer, tick);
                        self.store.parent(head).ok().flatten()
                    }
                };
                if let Some(id) = self.propose(proposer, slot, tick, parent, true) {
                    self.adv.fork_tip = Some(id);
                    self.log(
                        tick,
                        EventPayload::AdversaryAction {
                            actor: proposer,
                            action: format!("fork proposal at slot {slot}"),
                        },
                    );
                }
            }
            AdversaryStrategy::Scripted(plan) => {
                if let Some(wp) =
                    plan.withheld_proposals.iter().find(|wp| wp.slot == slot).cloned()
                {
                    if let Some(id) = self.propose(proposer, slot, tick, None, false) {
                        self.log(
                            tick,
                            EventPayload::AdversaryAction {
                                actor: proposer,
                                action: format!(
                                    "withhold block at slot {slot} until tick {}",
                                    wp.release_tick
                                ),
                            },
                        );
                        let members = self.adversary_members();
                        self.deliver_to(&members, tick, MsgRef::Block { id });
                        self.adv
                            .scripted_releases
                            .entry(self.cfg.slot_of(wp.release_tick))
                            .or_default()
                            .push((id, wp));
                    }
                } else {
                    self.propose(proposer, slot, tick, None, true);
                }
            }
        }
    }

    fn on_release(&mut self, tick: Tick, slot: Slot) {
        match self.config.adversary.strategy.clone() {
            AdversaryStrategy::WithholdRelease { .. } => {
                let withheld = std::mem::take(&mut self.adv.withheld);
                if withheld.is_empty() {
                    return;
                }
                let actor = self.adversary_members().first().copied().unwrap_or(ValidatorId(0));
                self.log(
                    tick,
                    EventPayload::AdversaryAction {
                        actor,
                        action: format!("release {} withheld messages", withheld.len()),
                    },
                );
                for (from, msg) in withheld {
                    self.broadcast(from, tick, msg);
                }
            }
            AdversaryStrategy::Scripted(_) => {
                let due = self.adv.scripted_releases.remove(&slot).unwrap_or_default();
                for (id, wp) in due {
                    if wp.release_tick != tick {
                        // a different release tick within the same slot
                        self.adv.scripted_releases.entry(slot).or_default().push((id, wp));
                        continue;
                    }
                    let proposer = self.store.get(id).ok().and_then(|b| b.proposer);
                    let actor = proposer.unwrap_or(ValidatorId(0));
                    self.log(
                        tick,
                        EventPayload::AdversaryAction {
                            actor,
                            action: format!("release withheld block {}", id.short()),
                        },
                    );
                    let early: BTreeSet<ValidatorId> =
                        wp.early_recipients.iter().map(|&v| ValidatorId(v)).collect();
                    let cap = self.window_cap(tick) - tick;
                    for to in (0..self.n()).map(ValidatorId) {
                        let delay = if early.contains(&to) || Some(to) == proposer {
                            0
                        } else {
                            wp.late_delay.min(cap)
                        };
                        self.push(tick + delay, EnginePayload::Deliver {
                            msg: MsgRef::Block { id },
                            to,
                        });
                    }
                }
            }
            _ => {}
        }
    }

    fn honest_vote(&mut self, v: ValidatorId, slot: Slot, tick: Tick) {
        let head = self.head_of(v, tick);
        self.cast_votes_for(v, slot, tick, head, true, false);
    }

    /// Casts the GHOST/FFG vote pair for `target` at the same instant.
    fn cast_votes_for(
        &mut self,
        v: ValidatorId,
        slot: Slot,
        tick: Tick,
        target: BlockId,
        publish_ffg: bool,
        also_parent: bool,
    ) {
        let ghost = GhostVote { signer: v, slot, block: target };
        self.log(tick, EventPayload::GhostVoteSent { vote: ghost });
        self.broadcast(v, tick, MsgRef::Ghost { vote: ghost });
        if also_parent {
            if let Ok(Some(parent)) = self.store.parent(target) {
                let second = GhostVote { signer: v, slot, block: parent };
                self.log(tick, EventPayload::GhostVoteSent { vote: second });
                self.broadcast(v, tick, MsgRef::Ghost { vote: second });
            }
        }
        let epoch = self.cfg.epoch_of_tick(tick);
        let source = match voting_source(&self.store, target, epoch) {
            Ok(s) => s,
            Err(_) => return,
        };
        let target_cp = match self.store.checkpoint_of(target, epoch) {
            Ok(c) => c,
            Err(_) => return,
        };
        let ffg = FfgVote { signer: v, source, target: target_cp, cast_at: slot };
        self.log(tick, EventPayload::FfgVoteSent { vote: ffg });
        if publish_ffg {
            self.broadcast(v, tick, MsgRef::Ffg { vote: ffg });
        } else {
            let members = self.adversary_members();
            self.deliver_to(&members, tick, MsgRef::Ffg { vote: ffg });
            self.log(
                tick,
                EventPayload::AdversaryAction { actor: v, action: "withhold ffg vote".into() },
            );
        }
    }

    fn adversary_vote(&mut self, v: ValidatorId, slot: Slot, tick: Tick) {
        match self.config.adversary.strategy.clone() {
            AdversaryStrategy::Silent => {}
            AdversaryStrategy::Equivocate { slots } => {
                let head = self.head_of(v, tick);
                let equivocate = slots.as_ref().map(|s| s.contains(&slot)).unwrap_or(true);
                self.cast_votes_for(v, slot, tick, head, true, equivocate);
            }
            AdversaryStrategy::WithholdRelease { .. } => {
                let target = self.adv.private_tip.unwrap_or_else(|| self.head_of(v, tick));
                // private votes go to the adversary only and join the release
                let ghost = GhostVote { signer: v, slot, block: target };
                self.log(tick, EventPayload::GhostVoteSent { vote: ghost });
                let members = self.adversary_members();
                self.deliver_to(&members, tick, MsgRef::Ghost { vote: ghost });
                self.adv.withheld.push((v, MsgRef::Ghost { vote: ghost }));
                let epoch = self.cfg.epoch_of_tick(tick);
                if let (Ok(source), Ok(target_cp)) = (
                    voting_source(&self.store, target, epoch),
                    self.store.checkpoint_of(target, epoch),
                ) {
                    let ffg = FfgVote { signer: v, source, target: target_cp, cast_at: slot };
                    self.log(tick, EventPayload::FfgVoteSent { vote: ffg });
                    self.deliver_to(&members, tick, MsgRef::Ffg { vote: ffg });
                    self.adv.withheld.push((v, MsgRef::Ffg { vote: ffg }));
                }
            }
            AdversaryStrategy::ConflictingFfg => {
                let target = self.adv.fork_tip.unwrap_or_else(|| self.head_of(v, tick));
                self.cast_votes_for(v, slot, tick, target, true, false);
            }
            AdversaryStrategy::Scripted(plan) => {
                if let Some(defect) =
                    plan.defect_votes.iter().find(|d| d.slot == slot && d.voter == v.0)
                {
                    let target = self
                        .adv
                        .latest_by_group
                        .get(&defect.target_group)
                        .copied()
                        .unwrap_or_else(|| self.head_of(v, tick));
                    self.cast_votes_for(v, slot, tick, target, true, false);
                    self.log(
                        tick,
                        EventPayload::AdversaryAction {
                            actor: v,
                            action: format!("defect vote at slot {slot}"),
                        },
                    );
                    return;
                }
                if plan.equivocate_at.iter().any(|&(s, voter)| s == slot && voter == v.0) {
                    let head = self.head_of(v, tick);
                    self.cast_votes_for(v, slot, tick, head, true, true);
                    return;
                }
                let withhold_ffg =
                    plan.withhold_ffg_epochs.contains(&self.cfg.epoch_of_slot(slot));
                let head = self.head_of(v, tick);
                self.cast_votes_for(v, slot, tick, head, !withhold_ffg, false);
            }
        }
    }

    fn on_vote_deadline(&mut self, tick: Tick, slot: Slot) {
        self.log(tick, EventPayload::VoteDeadline { slot });
        // head samples for every honest validator
        for v in self.honest.clone() {
            let head = self.head_of(v, tick);
            self.log(tick, EventPayload::Head { validator: v, head });
        }
        let committee: Vec<ValidatorId> = self.schedule.committee(slot).iter().collect();
        for v in committee {
            if self.is_honest(v) {
                self.honest_vote(v, slot, tick);
            } else {
                self.adversary_vote(v, slot, tick);
            }
        }
    }

    fn on_slot_eval(&mut self, tick: Tick, slot: Slot) {
        let epoch = self.cfg.epoch_of_slot(slot);
        // heads for all honest validators at the slot start
        let mut heads: BTreeMap<ValidatorId, BlockId> = BTreeMap::new();
        for v in self.honest.clone() {
            let head = self.head_of(v, tick);
            self.log(tick, EventPayload::Head { validator: v, head });
            heads.insert(v, head);
        }

        let mut gj_totals: Vec<(ValidatorId, u128)> = Vec::new();
        for obs in self.observers.clone() {
            let view = &self.views[obs.index()];
            let gj = gj_view(&self.store, view.block_ids(), tick);
            let gf = gf_view(&self.store, view.block_ids(), tick);
            let head = heads[&obs];
            self.log(tick, EventPayload::ObserverState { observer: obs, head, gj, gf });
            gj_totals.push((obs, self.store.eba(gj.block).map(|e| e.total_weight()).unwrap_or(0)));

            let ev = Evaluator::new(
                &self.store,
                &self.schedule,
                &self.views[obs.index()],
                &self.params,
                tick,
                head,
                gj,
                gf,
            );
            let mut frontier_logs = Vec::new();
            for rule in self.config.rules.clone() {
                let winner = ev.slot_winner(rule);
                let cache = self.caches.get_mut(&(obs, rule)).expect("cache exists");
                cache.record(slot, Some(winner));
                let frontier =
                    cache.frontier(&self.store, epoch - 1, tick).unwrap_or(self.store.genesis());
                frontier_logs.push((rule, frontier));
            }
            let mut raw_logs = Vec::new();
            if self.config.log_raw_safe && Some(&obs) == self.observers.first() {
                for &b in ev.chain() {
                    if b == self.store.genesis() {
                        continue;
                    }
                    if let Some(pass) = ev.raw_block_ok(b, gj) {
                        raw_logs.push((b, pass));
                    }
                }
            }
            for (rule, frontier) in frontier_logs {
                self.log(tick, EventPayload::Frontier { observer: obs, rule, frontier });
            }
            for (b, pass) in raw_logs {
                self.log(tick, EventPayload::RawSafe { observer: obs, block: b, pass });
            }
            if self.config.log_qp_samples && Some(&obs) == self.observers.first() {
                self.log_qp(obs, tick, head, gj);
            }
        }

        // weight-precondition divergence across observers
        if let (Some(min), Some(max)) = (
            gj_totals.iter().min_by_key(|(_, w)| *w),
            gj_totals.iter().max_by_key(|(_, w)| *w),
        ) {
            if min.1 < max.1 {
                self.log(
                    tick,
                    EventPayload::GjWeightDivergence {
                        observer_low: min.0,
                        observer_high: max.0,
                        total_low: min.1 as u64,
                        total_high: max.1 as u64,
                    },
                );
            }
        }
    }

    fn log_qp(&mut self, obs: ValidatorId, tick: Tick, head: BlockId, gj: crate::chain::Checkpoint) {
        let eba = match self.store.eba(gj.block) {
            Ok(e) => e.clone(),
            Err(_) => return,
        };
        let honest = ValidatorSet::from_ids(self.honest.iter().copied());
        let s_prime = self.cfg.slot_of(tick) - 1;
        let chain = self.store.chain(head).unwrap_or_default();
        let mut samples = Vec::new();
        {
            let view = &self.views[obs.index()];
            for b in chain {
                if b == self.store.genesis() {
                    continue;
                }
                let q = q_indicator(&self.store, &self.schedule, view, tick, b, s_prime, &eba);
                let p = p_indicator_oracle(
                    &self.store,
                    &self.schedule,
                    view,
                    tick,
                    b,
                    s_prime,
                    &eba,
                    honest,
                );
                if let (Ok(q), Ok(p)) = (q, p) {
                    samples.push((b, rational_to_string(&q), rational_to_string(&p)));
                }
            }
        }
        for (b, q, p) in samples {
            self.log(tick, EventPayload::QpSample { observer: obs, block: b, q, p });
        }
    }
}

/// Convenience wrapper matching the library's operator entry point.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimulationTrace, ConfigError> {
    Simulation::run(config)
}

/// Builds and runs one of the named counterexample scenarios.
pub fn replay_counterexample(name: CounterexampleName) -> Result<SimulationTrace, ConfigError> {
    let config = match name {
        CounterexampleName::GjWeight => replay::gj_weight_config(),
        CounterexampleName::NonMonotoneQ => replay::non_monotone_q_config(),
    };
    Simulation::run(&config)
}
