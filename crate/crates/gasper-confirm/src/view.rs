//! A validator's view: the monotone set of messages it has received,
//! with receipt times for snapshot queries.

use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{
    BlockId, BlockStore, Checkpoint, CommitteeSchedule, Slot, Tick, ValidatorId, ValidatorSet,
};
use crate::ffg::{equivocation_evidence, FfgVote};
use crate::fork_choice::GhostVote;

#[derive(Debug, Clone, Default)]
pub struct View {
    /// Validity-checked blocks, with the tick at which each entered the view.
    blocks: BTreeMap<BlockId, Tick>,
    /// Delivered blocks whose parent has not arrived yet.
    pending: BTreeSet<BlockId>,
    /// All received GHOST votes, per signer and slot.
    ghost_votes: BTreeMap<ValidatorId, BTreeMap<Slot, BTreeSet<BlockId>>>,
    /// Signers seen voting twice in one slot for different blocks.
    equivocators: ValidatorSet,
    /// A convicting vote pair per equivocator, for evidence inclusion.
    evidence: BTreeMap<ValidatorId, (GhostVote, GhostVote)>,
    ffg_votes: BTreeSet<FfgVote>,
    /// Distinct signers of received votes per (source, target) link.
    ffg_link_signers: BTreeMap<(Checkpoint, Checkpoint), ValidatorSet>,
}

impl View {
    pub fn new() -> Self {
        View::default()
    }

    pub fn genesis(store: &BlockStore) -> Self {
        let mut v = View::new();
        v.blocks.insert(store.genesis(), 0);
        v
    }

    pub fn contains_block(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn block_ids(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.keys().copied()
    }

    pub fn received_at(&self, id: BlockId) -> Option<Tick> {
        self.blocks.get(&id).copied()
    }

    /// Blocks present by the end of `tick` (receipt tick <= tick).
    pub fn blocks_at(&self, tick: Tick) -> impl Iterator<Item = BlockId> + '_ {
        self.blocks.iter().filter(move |(_, &r)| r <= tick).map(|(&b, _)| b)
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Admits a delivered block if its proposer matches the schedule and its
    /// parent is already in the view; otherwise parks it. Returns every block
    /// admitted by this delivery (the block plus any unparked descendants).
    pub fn add_block(
        &mut self,
        store: &BlockStore,
        schedule: &CommitteeSchedule,
        id: BlockId,
        tick: Tick,
    ) -> Vec<BlockId> {
        if self.blocks.contains_key(&id) {
            return Vec::new();
        }
        let block = match store.get(id) {
            Ok(b) => b,
            Err(_) => return Vec::new(),
        };
        if block.proposer != schedule.proposer(block.slot) {
            return Vec::new(); // invalid: wrong proposer
        }
        let parent = block.parent.expect("only genesis has no parent");
        if !self.blocks.contains_key(&parent) {
            self.pending.insert(id);
            return Vec::new();
        }
        self.blocks.insert(id, tick);
        let mut admitted = vec![id];
        // promote any parked descendants, cascading
        loop {
            let ready: Vec<BlockId> = self
                .pending
                .iter()
                .copied()
                .filter(|p| {
                    store
                        .get(*p)
                        .ok()
                        .and_then(|b| b.parent)
                        .map(|par| self.blocks.contains_key(&par))
                        .unwrap_or(false)
                })
                .collect();
            if ready.is_empty() {
                break;
            }
            for r in ready {
                self.pending.remove(&r);
                self.blocks.insert(r, tick);
                admitted.push(r);
            }
        }
        admitted
    }

    pub fn add_ghost_vote(&mut self, vote: GhostVote) {
        let slots = self.ghost_votes.entry(vote.signer).or_default();
        let blocks = slots.entry(vote.slot).or_default();
        if blocks.insert(vote.block) && blocks.len() > 1 && !self.equivocators.contains(vote.signer)
        {
            self.equivocators.insert(vote.signer);
            let other = *blocks.iter().find(|b| **b != vote.block).expect("second block");
            let pair =
                (GhostVote { signer: vote.signer, slot: vote.slot, block: other }, vote);
            debug_assert!(equivocation_evidence(&pair.0, &pair.1).is_some());
            self.evidence.insert(vote.signer, pair);
        }
    }

    pub fn add_ffg_vote(&mut self, vote: FfgVote) {
        if self.ffg_votes.insert(vote) {
            self.ffg_link_signers
                .entry((vote.source, vote.target))
                .or_default()
                .insert(vote.signer);
        }
    }

    pub fn ghost_votes(&self) -> impl Iterator<Item = GhostVote> + '_ {
        self.ghost_votes.iter().flat_map(|(&signer, slots)| {
            slots.iter().flat_map(move |(&slot, blocks)| {
                blocks.iter().map(move |&block| GhostVote { signer, slot, block })
            })
        })
    }

    pub fn ghost_votes_of(&self, signer: ValidatorId) -> Option<&BTreeMap<Slot, BTreeSet<BlockId>>> {
        self.ghost_votes.get(&signer)
    }

    pub fn voters(&self) -> impl Iterator<Item = ValidatorId> + '_ {
        self.ghost_votes.keys().copied()
    }

    pub fn equivocators(&self) -> ValidatorSet {
        self.equivocators
    }

    pub fn evidence_for(&self, v: ValidatorId) -> Option<&(GhostVote, GhostVote)> {
        self.evidence.get(&v)
    }

    pub fn ffg_votes(&self) -> impl Iterator<Item = &FfgVote> + '_ {
        self.ffg_votes.iter()
    }

    /// Distinct received signers of the link source -> target.
    pub fn ffg_link_signers(&self, source: Checkpoint, target: Checkpoint) -> ValidatorSet {
        self.ffg_link_signers.get(&(source, target)).copied().unwrap_or(ValidatorSet::EMPTY)
    }

    /// Distinct received signers of votes targeting `target`, any source.
    pub fn ffg_target_signers(&self, target: Checkpoint) -> ValidatorSet {
        let mut out = ValidatorSet::EMPTY;
        for ((_, t), signers) in &self.ffg_link_signers {
            if *t == target {
                out = out.union(*signers);
            }
        }
        out
    }
}
