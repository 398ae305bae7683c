//! The three-layer fork choice: vote-weighted GHOST, LMD-GHOST with its four
//! view filters, and LMD-GHOST-HFC with the justification filter, plus
//! proposer boost.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::chain::{
    BlockId, BlockStore, Checkpoint, CommitteeSchedule, Eba, Slot, Tick, ValidatorId, ValidatorSet,
};
use crate::ffg::{gf_view, gj_view, voting_source};
use crate::view::View;

/// A head vote: (signer, slot, block).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct GhostVote {
    pub signer: ValidatorId,
    pub slot: Slot,
    pub block: BlockId,
}

/// Extra weight temporarily granted to a timely current-slot proposal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BoostState {
    pub boosted: Option<BlockId>,
}

impl BoostState {
    pub fn grant(&mut self, block: BlockId) {
        self.boosted = Some(block);
    }

    pub fn clear(&mut self) {
        self.boosted = None;
    }
}

/// Boost weight and application mode resolved against a concrete balance
/// assignment: W_p = (p / E) * total.
#[derive(Debug, Clone)]
pub struct BoostWeight {
    pub boosted: Option<BlockId>,
    pub weight: BigRational,
    /// When set, the boost also counts for ancestors of the boosted block
    /// during the walk (production-style subtree boost). Off by default.
    pub subtree: bool,
}

impl BoostWeight {
    pub fn none() -> Self {
        BoostWeight { boosted: None, weight: BigRational::zero(), subtree: false }
    }

    pub fn resolve(
        boost: BoostState,
        boost_fraction: &BigRational,
        slots_per_epoch: i64,
        eba: &Eba,
        subtree: bool,
    ) -> Self {
        let weight = boost_fraction / BigRational::from_integer(slots_per_epoch.into())
            * BigRational::from_integer(eba.total_weight().into());
        BoostWeight { boosted: boost.boosted, weight, subtree }
    }

    fn applies_to(&self, store: &BlockStore, candidate: BlockId) -> bool {
        match self.boosted {
            None => false,
            Some(boosted) => {
                if self.weight.is_zero() {
                    return false;
                }
                if self.subtree {
                    store.is_ancestor(candidate, boosted).unwrap_or(false)
                } else {
                    candidate == boosted
                }
            }
        }
    }
}

/// Signers that have voted in support of `b` (some vote's block is a
/// descendant of or equal to `b`).
pub fn ghost_voters<'a, I>(store: &BlockStore, votes: I, b: BlockId) -> ValidatorSet
where
    I: IntoIterator<Item = &'a GhostVote>,
{
    let mut out = ValidatorSet::EMPTY;
    for vote in votes {
        if !out.contains(vote.signer)
            && store.is_ancestor(b, vote.block).unwrap_or(false)
        {
            out.insert(vote.signer);
        }
    }
    out
}

/// Per-block supporter sets for every ancestor touched by some vote.
/// Missing entries mean "no supporters".
pub fn supporter_map<'a, I>(store: &BlockStore, votes: I) -> BTreeMap<BlockId, ValidatorSet>
where
    I: IntoIterator<Item = &'a GhostVote>,
{
    let mut map: BTreeMap<BlockId, ValidatorSet> = BTreeMap::new();
    for vote in votes {
        let mut cur = match store.contains(vote.block) {
            true => Some(vote.block),
            false => None,
        };
        while let Some(b) = cur {
            map.entry(b).or_default().insert(vote.signer);
            cur = store.parent(b).ok().flatten();
        }
    }
    map
}

/// Vote-weighted greedy heaviest-subtree walk from genesis over the blocks
/// present in `blocks`, visiting only non-future blocks. Ties break toward
/// the greatest (slot, id).
pub fn ghost(
    store: &BlockStore,
    blocks: &BTreeSet<BlockId>,
    votes: &[GhostVote],
    t: Tick,
    eba: &Eba,
    boost: &BoostWeight,
) -> BlockId {
    let slot_cap = store.cfg().slot_of(t);
    // supporter sets are only needed once the walk meets a real fork
    let mut supporters: Option<BTreeMap<BlockId, ValidatorSet>> = None;
    let mut head = store.genesis();
    loop {
        let eligible: Vec<BlockId> = store
            .children(head)
            .iter()
            .copied()
            .filter(|c| blocks.contains(c))
            .filter(|c| store.slot(*c).map(|s| s <= slot_cap).unwrap_or(false))
            .collect();
        if eligible.is_empty() {
            return head;
        }
        if eligible.len() == 1 {
            head = eligible[0];
            continue;
        }
        let supporters =
            supporters.get_or_insert_with(|| supporter_map(store, votes.iter()));
        let mut best: Option<(BigRational, (Slot, BlockId))> = None;
        let mut best_block = eligible[0];
        for c in eligible {
            let base = supporters.get(&c).map(|s| eba.weight(*s)).unwrap_or(0);
            let mut w = BigRational::from_integer(base.into());
            if boost.applies_to(store, c) {
                w += boost.weight.clone();
            }
            let key = (w, store.order_key(c));
            if best.as_ref().map(|b| key > *b).unwrap_or(true) {
                best = Some(key);
                best_block = c;
            }
        }
        head = best_block;
    }
}

/// FIL_eq, then FIL_cur, then FIL_inv, then FIL_lmd: drops every vote of an equivocating
/// signer, votes from the current or future slots, votes from non-committee
/// members or for future blocks (or blocks not yet in the view), and keeps
/// one vote per signer, the highest-slot survivor.
pub fn filter_chain(
    store: &BlockStore,
    schedule: &CommitteeSchedule,
    view: &View,
    t: Tick,
) -> Vec<GhostVote> {
    let current_slot = store.cfg().slot_of(t);
    let equivocators = view.equivocators();
    let mut out = Vec::new();
    for signer in view.voters() {
        if equivocators.contains(signer) {
            continue;
        }
        let slots = match view.ghost_votes_of(signer) {
            Some(s) => s,
            None => continue,
        };
        'slots: for (&slot, blocks) in slots.iter().rev() {
            if slot >= current_slot {
                continue;
            }
            if !schedule.committee(slot).contains(signer) {
                continue;
            }
            for &block in blocks {
                let block_slot = match store.slot(block) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                if block_slot > slot || !view.contains_block(block) {
                    continue;
                }
                out.push(GhostVote { signer, slot, block });
                break 'slots;
            }
        }
    }
    out
}

/// LMD-GHOST: GHOST applied to the filtered vote set.
pub fn lmd_ghost(
    store: &BlockStore,
    schedule: &CommitteeSchedule,
    view: &View,
    t: Tick,
    eba: &Eba,
    boost: &BoostWeight,
) -> BlockId {
    let votes = filter_chain(store, schedule, view, t);
    let blocks: BTreeSet<BlockId> = view.block_ids().collect();
    ghost(store, &blocks, &votes, t, eba, boost)
}

/// The justification filter: keeps ancestors of the greatest justified
/// checkpoint, plus every block between it and a viable leaf (a leaf
/// descending from the greatest finalized checkpoint, not from the future,
/// whose voting source is the justified checkpoint or recent enough).
pub fn fil_hfc(
    store: &BlockStore,
    view: &View,
    t: Tick,
    gj: Checkpoint,
    gf: Checkpoint,
) -> BTreeSet<BlockId> {
    let cfg = store.cfg();
    let epoch_now = cfg.epoch_of_tick(t);
    let in_view: BTreeSet<BlockId> = view.block_ids().collect();

    let mut kept: BTreeSet<BlockId> = store.chain(gj.block).map(|c| c.into_iter().collect()).unwrap_or_default();

    for &leaf in &in_view {
        let has_child_in_view =
            store.children(leaf).iter().any(|c| in_view.contains(c));
        if has_child_in_view {
            continue;
        }
        if store.epoch(leaf).map(|e| e > epoch_now).unwrap_or(true) {
            continue;
        }
        if !store.is_ancestor(gf.block, leaf).unwrap_or(false) {
            continue;
        }
        let vs = match voting_source(store, leaf, epoch_now) {
            Ok(v) => v,
            Err(_) => continue,
        };
        if !(vs == gj || vs.epoch >= epoch_now - 2) {
            continue;
        }
        if !store.is_ancestor(gj.block, leaf).unwrap_or(false) {
            continue;
        }
        // keep the whole segment from the leaf down to block(gj)
        let mut cur = leaf;
        while cur != gj.block {
            kept.insert(cur);
            cur = match store.parent(cur) {
                Ok(Some(p)) => p,
                _ => break,
            };
        }
    }
    kept.retain(|b| in_view.contains(b));
    kept
}

/// The protocol fork choice: LMD-GHOST over the justification-filtered view,
/// votes weighed by the balance assignment of the greatest justified
/// checkpoint's block.
pub fn lmd_ghost_hfc(
    store: &BlockStore,
    schedule: &CommitteeSchedule,
    view: &View,
    t: Tick,
    boost: BoostState,
    boost_fraction: &BigRational,
    subtree_boost: bool,
) -> BlockId {
    let gj = gj_view(store, view.block_ids(), t);
    let gf = gf_view(store, view.block_ids(), t);
    let eba = store.eba(gj.block).expect("gj block in store").clone();
    let boost = BoostWeight::resolve(
        boost,
        boost_fraction,
        store.cfg().slots_per_epoch,
        &eba,
        subtree_boost,
    );
    let kept = fil_hfc(store, view, t, gj, gf);
    let votes = filter_chain(store, schedule, view, t);
    ghost(store, &kept, &votes, t, &eba, &boost)
}
