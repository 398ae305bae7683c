//! FFG-Casper semantics: source-to-target checkpoint votes, per-block
//! unrealized justification and finalization, voting sources and the
//! view-level greatest justified/finalized checkpoints.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{
    Block, BlockId, BlockRuntime, BlockStore, ChainError, Checkpoint, Eba, Epoch, Slot, Tick,
    ValidatorId, ValidatorSet,
};
use crate::fork_choice::GhostVote;

/// A source-to-target checkpoint link vote.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct FfgVote {
    pub signer: ValidatorId,
    pub source: Checkpoint,
    pub target: Checkpoint,
    pub cast_at: Slot,
}

/// Two GHOST votes by the same signer for the same slot but different blocks
/// convict the signer. Honest validators never produce such pairs.
pub fn equivocation_evidence(a: &GhostVote, b: &GhostVote) -> Option<ValidatorId> {
    if a.signer == b.signer && a.slot == b.slot && a.block != b.block {
        Some(a.signer)
    } else {
        None
    }
}

/// Chain-intrinsic justification state, computed once per block.
///
/// `unrealized_*` count every vote included in the chain of the block;
/// `gj`/`gf_j` are the same quantities realized over the prefix of the chain
/// restricted to blocks from strictly earlier epochs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JustificationMeta {
    /// U(b): checkpoints with a supermajority link from a justified source
    /// among the votes included in chain(b).
    pub unrealized_justified: BTreeSet<Checkpoint>,
    /// F(b): checkpoints finalized by the one-step rule within chain(b).
    pub unrealized_finalized: BTreeSet<Checkpoint>,
    pub gu: Checkpoint,
    pub gj: Checkpoint,
    pub gf_u: Checkpoint,
    pub gf_j: Checkpoint,
    /// Distinct signers of included votes per (source, target) link.
    pub link_signers: BTreeMap<(Checkpoint, Checkpoint), ValidatorSet>,
    /// Exact set of votes already included in this chain.
    pub included_votes: BTreeSet<FfgVote>,
}

fn supermajority(signed: u128, total: u128) -> bool {
    3 * signed >= 2 * total
}

impl JustificationMeta {
    pub fn genesis(genesis_cp: Checkpoint) -> Self {
        let mut justified = BTreeSet::new();
        justified.insert(genesis_cp);
        let mut finalized = BTreeSet::new();
        finalized.insert(genesis_cp);
        JustificationMeta {
            unrealized_justified: justified,
            unrealized_finalized: finalized,
            gu: genesis_cp,
            gj: genesis_cp,
            gf_u: genesis_cp,
            gf_j: genesis_cp,
            link_signers: BTreeMap::new(),
            included_votes: BTreeSet::new(),
        }
    }

    /// Derives the state for a block being inserted; `store` does not yet
    /// contain the block itself, only its full ancestry.
    pub fn for_block(
        store: &BlockStore,
        block: &Block,
        parent_rt: &BlockRuntime,
        prev_epoch_ancestor: Option<BlockId>,
        _eba: &Eba,
    ) -> Self {
        let parent_id = block.parent.expect("for_block is never called on genesis");
        let parent = &parent_rt.meta;
        let mut link_signers = parent.link_signers.clone();
        let mut included_votes = parent.included_votes.clone();
        for vote in &block.ffg_votes {
            included_votes.insert(*vote);
            link_signers.entry((vote.source, vote.target)).or_default().insert(vote.signer);
        }

        let mut justified = parent.unrealized_justified.clone();
        // Single ascending pass over targets suffices: a link's source has a
        // strictly smaller epoch, so it is decided before its dependents.
        // Loop defensively until a fixpoint anyway.
        loop {
            let mut changed = false;
            let mut targets: Vec<Checkpoint> = link_signers
                .keys()
                .map(|(_, t)| *t)
                .filter(|t| !justified.contains(t))
                .collect();
            targets.sort();
            targets.dedup();
            for target in targets {
                if !store.contains(target.block) {
                    continue;
                }
                // only checkpoints in the chain of this block (ancestry of
                // the parent; the new block cannot be referenced by votes it
                // includes)
                if !store.is_ancestor(target.block, parent_id).unwrap_or(false) {
                    continue;
                }
                let target_eba = match store.eba(target.block) {
                    Ok(e) => e,
                    Err(_) => continue,
                };
                let total = target_eba.total_weight();
                let reached = link_signers.iter().any(|(&(src, tgt), signers)| {
                    tgt == target
                        && src.epoch < target.epoch
                        && justified.contains(&src)
                        && supermajority(target_eba.weight(*signers), total)
                });
                if reached {
                    justified.insert(target);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }

        let mut finalized = parent.unrealized_finalized.clone();
        for (&(src, tgt), signers) in &link_signers {
            if tgt.epoch == src.epoch + 1
                && justified.contains(&src)
                && justified.contains(&tgt)
                && !finalized.contains(&src)
            {
                if let Ok(target_eba) = store.eba(tgt.block) {
                    if supermajority(target_eba.weight(*signers), target_eba.total_weight()) {
                        finalized.insert(src);
                    }
                }
            }
        }

        let gu = store.max_checkpoint(justified.iter().copied()).expect("genesis is justified");
        let gf_u =
            store.max_checkpoint(finalized.iter().copied()).expect("genesis is finalized");
        let (gj, gf_j) = match prev_epoch_ancestor {
            Some(a) => {
                let m = &store.runtime(a).expect("ancestor in store").meta;
                (m.gu, m.gf_u)
            }
            None => {
                let g = store.genesis_checkpoint();
                (g, g)
            }
        };

        JustificationMeta {
            unrealized_justified: justified,
            unrealized_finalized: finalized,
            gu,
            gj,
            gf_u,
            gf_j,
            link_signers,
            included_votes,
        }
    }
}

/// The FFG source an honest validator uses when voting for head `b` in
/// epoch `e`: GJ(b) in b's own epoch, GU(b) once an epoch boundary has
/// passed, undefined for blocks from the future.
pub fn voting_source(store: &BlockStore, b: BlockId, e: Epoch) -> Result<Checkpoint, ChainError> {
    let be = store.epoch(b)?;
    let meta = &store.runtime(b)?.meta;
    if be == e {
        Ok(meta.gj)
    } else if be < e {
        Ok(meta.gu)
    } else {
        Err(ChainError::UndefinedVotingSource { block_epoch: be, query: e })
    }
}

/// Finalization realized with the same one-epoch lag as the voting source.
pub fn finalized_source(
    store: &BlockStore,
    b: BlockId,
    e: Epoch,
) -> Result<Checkpoint, ChainError> {
    let be = store.epoch(b)?;
    let meta = &store.runtime(b)?.meta;
    if be == e {
        Ok(meta.gf_j)
    } else if be < e {
        Ok(meta.gf_u)
    } else {
        Err(ChainError::UndefinedVotingSource { block_epoch: be, query: e })
    }
}

/// Greatest justified checkpoint across the blocks of a view at time `t`.
pub fn gj_view<I>(store: &BlockStore, blocks: I, t: Tick) -> Checkpoint
where
    I: IntoIterator<Item = BlockId>,
{
    let cfg = store.cfg();
    let slot = cfg.slot_of(t);
    let epoch = cfg.epoch_of_tick(t);
    let candidates = blocks
        .into_iter()
        .filter(|&b| store.slot(b).map(|s| s <= slot).unwrap_or(false))
        .filter_map(|b| voting_source(store, b, epoch).ok());
    store.max_checkpoint(candidates).unwrap_or_else(|| store.genesis_checkpoint())
}

/// Greatest finalized checkpoint across the blocks of a view at time `t`.
pub fn gf_view<I>(store: &BlockStore, blocks: I, t: Tick) -> Checkpoint
where
    I: IntoIterator<Item = BlockId>,
{
    let cfg = store.cfg();
    let slot = cfg.slot_of(t);
    let epoch = cfg.epoch_of_tick(t);
    let candidates = blocks
        .into_iter()
        .filter(|&b| store.slot(b).map(|s| s <= slot).unwrap_or(false))
        .filter_map(|b| finalized_source(store, b, epoch).ok());
    store.max_checkpoint(candidates).unwrap_or_else(|| store.genesis_checkpoint())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BlockDraft, ChainConfig, ChurnSchedule};
    use num_rational::BigRational;
    use num_traits::Zero;

    fn store4() -> BlockStore {
        // 4 validators of weight 1, E = 4
        let cfg = ChainConfig { slots_per_epoch: 4, ticks_per_slot: 12, vote_offset_ticks: 4 };
        BlockStore::new(cfg, Eba::uniform(4, 1), ChurnSchedule::new(), BigRational::zero())
    }

    fn child_with_votes(
        store: &mut BlockStore,
        parent: BlockId,
        slot: Slot,
        votes: Vec<FfgVote>,
    ) -> BlockId {
        store
            .insert(BlockDraft {
                slot,
                proposer: Some(ValidatorId(0)),
                parent: Some(parent),
                ffg_votes: votes,
                slashing_evidence: vec![],
                payload: 0,
            })
            .unwrap()
    }

    fn link(signer: u32, source: Checkpoint, target: Checkpoint, cast_at: Slot) -> FfgVote {
        FfgVote { signer: ValidatorId(signer), source, target, cast_at }
    }

    #[test]
    fn genesis_is_justified_and_finalized() {
        let s = store4();
        let g = s.genesis();
        let meta = &s.runtime(g).unwrap().meta;
        let gcp = s.genesis_checkpoint();
        assert_eq!(meta.unrealized_justified.iter().copied().collect::<Vec<_>>(), vec![gcp]);
        assert_eq!(meta.unrealized_finalized.iter().copied().collect::<Vec<_>>(), vec![gcp]);
    }

    #[test]
    fn two_thirds_quorum_justifies() {
        // 4 validators, weight 1 each: 3 votes justify (>= 8/3), 2 do not.
        let mut s = store4();
        let g = s.genesis();
        let gcp = s.genesis_checkpoint();
        let b1 = child_with_votes(&mut s, g, 4, vec![]);
        let c1 = Checkpoint::new(b1, 1);

        let three: Vec<FfgVote> = (0..3).map(|i| link(i, gcp, c1, 5)).collect();
        let b2 = child_with_votes(&mut s, b1, 5, three);
        assert!(s.runtime(b2).unwrap().meta.unrealized_justified.contains(&c1));
        assert_eq!(s.runtime(b2).unwrap().meta.gu, c1);

        let mut s2 = store4();
        let g2 = s2.genesis();
        let gcp2 = s2.genesis_checkpoint();
        let b1b = child_with_votes(&mut s2, g2, 4, vec![]);
        let c1b = Checkpoint::new(b1b, 1);
        let two: Vec<FfgVote> = (0..2).map(|i| link(i, gcp2, c1b, 5)).collect();
        let b2b = child_with_votes(&mut s2, b1b, 5, two);
        assert!(!s2.runtime(b2b).unwrap().meta.unrealized_justified.contains(&c1b));
    }

    #[test]
    fn consecutive_links_finalize() {
        let mut s = store4();
        let g = s.genesis();
        let gcp = s.genesis_checkpoint();
        let b1 = child_with_votes(&mut s, g, 4, vec![]);
        let c1 = Checkpoint::new(b1, 1);
        let b2 = child_with_votes(&mut s, b1, 5, (0..3).map(|i| link(i, gcp, c1, 5)).collect());
        // epoch-2 boundary block
        let b3 = child_with_votes(&mut s, b2, 8, vec![]);
        let c2 = Checkpoint::new(b3, 2);
        let b4 = child_with_votes(&mut s, b3, 9, (0..3).map(|i| link(i, c1, c2, 9)).collect());
        let meta = &s.runtime(b4).unwrap().meta;
        assert!(meta.unrealized_justified.contains(&c2));
        assert!(meta.unrealized_finalized.contains(&c1));
        assert_eq!(meta.gf_u, c1);
        // Finalized set stays inside the justified set.
        assert!(meta.unrealized_finalized.is_subset(&meta.unrealized_justified));
    }

    #[test]
    fn voting_source_cases() {
        let mut s = store4();
        let g = s.genesis();
        let gcp = s.genesis_checkpoint();
        let b1 = child_with_votes(&mut s, g, 4, vec![]);
        let c1 = Checkpoint::new(b1, 1);
        // b2 in epoch 1 carries the justifying votes for c1: GU realizes
        // immediately, GJ waits for the next epoch.
        let b2 = child_with_votes(&mut s, b1, 5, (0..3).map(|i| link(i, gcp, c1, 5)).collect());
        assert_eq!(voting_source(&s, b2, 1).unwrap(), gcp); // GJ(b2)
        assert_eq!(voting_source(&s, b2, 2).unwrap(), c1); // GU(b2)
        assert!(voting_source(&s, b2, 0).is_err());

        // An epoch-2 block realizes GJ = c1.
        let b3 = child_with_votes(&mut s, b2, 8, vec![]);
        assert_eq!(voting_source(&s, b3, 2).unwrap(), c1);
    }

    #[test]
    fn view_level_max() {
        let mut s = store4();
        let g = s.genesis();
        let gcp = s.genesis_checkpoint();
        let b1 = child_with_votes(&mut s, g, 4, vec![]);
        let c1 = Checkpoint::new(b1, 1);
        let b2 = child_with_votes(&mut s, b1, 5, (0..3).map(|i| link(i, gcp, c1, 5)).collect());
        // a conflicting branch that justified nothing
        let x = child_with_votes(&mut s, g, 6, vec![]);

        let t_epoch2 = s.cfg().epoch_start(2);
        let blocks = [g, b1, b2, x];
        assert_eq!(gj_view(&s, blocks.iter().copied(), t_epoch2), c1);
        assert_eq!(gf_view(&s, blocks.iter().copied(), t_epoch2), gcp);
        // fresh network: only genesis
        assert_eq!(gj_view(&s, [g], 0), gcp);
        assert_eq!(gf_view(&s, [g], 0), gcp);
    }

    #[test]
    fn equivocation_detection() {
        let a = GhostVote { signer: ValidatorId(3), slot: 5, block: BlockId([1; 32]) };
        let b = GhostVote { signer: ValidatorId(3), slot: 5, block: BlockId([2; 32]) };
        let c = GhostVote { signer: ValidatorId(3), slot: 6, block: BlockId([2; 32]) };
        assert_eq!(equivocation_evidence(&a, &b), Some(ValidatorId(3)));
        assert_eq!(equivocation_evidence(&a, &c), None);
        assert_eq!(equivocation_evidence(&a, &a), None);
    }
}
