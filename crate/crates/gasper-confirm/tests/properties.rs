//! Property tests for the structural invariants: committee partitions,
//! checkpoint idempotence, the ancestor partial order, exact weight
//! arithmetic, vote-filter soundness, boost neutrality, threshold
//! monotonicity and view-level checkpoint monotonicity.

use std::collections::BTreeSet;

use num_rational::BigRational;
use num_traits::Zero;
use proptest::prelude::*;

use gasper_confirm::chain::{
    BlockDraft, BlockId, BlockStore, ChainConfig, ChurnSchedule, CommitteeSchedule, Eba, Slot,
    ValidatorId, ValidatorSet,
};
use gasper_confirm::confirmation::{frac, safe_threshold_base};
use gasper_confirm::ffg::{gf_view, gj_view, FfgVote};
use gasper_confirm::fork_choice::{filter_chain, lmd_ghost, BoostState, BoostWeight, GhostVote};
use gasper_confirm::view::View;

fn cfg(e: i64) -> ChainConfig {
    ChainConfig { slots_per_epoch: e, ticks_per_slot: 12, vote_offset_ticks: 4 }
}

/// A DAG described by (parent index, slot advance) pairs.
fn build_dag(store: &mut BlockStore, shape: &[(usize, i64)]) -> Vec<BlockId> {
    let mut ids = vec![store.genesis()];
    for (i, &(parent_sel, advance)) in shape.iter().enumerate() {
        let parent = ids[parent_sel % ids.len()];
        let slot = store.slot(parent).unwrap() + advance;
        if let Ok(id) = store.insert(BlockDraft {
            slot,
            proposer: Some(ValidatorId((i % 8) as u32)),
            parent: Some(parent),
            ffg_votes: vec![],
            slashing_evidence: vec![],
            payload: i as u64,
        }) {
            ids.push(id);
        }
    }
    ids
}

fn dag_shape() -> impl Strategy<Value = Vec<(usize, i64)>> {
    prop::collection::vec((0..16usize, 1..4i64), 1..16)
}

proptest! {
    #[test]
    fn committee_partition(n in 2u32..32, e in 2i64..6, seed in 0u64..1000) {
        let eba = Eba::uniform(n as usize, 1);
        let sched = CommitteeSchedule::derive(seed, cfg(e), &eba, &ChurnSchedule::new(), 3);
        for epoch in 0..3i64 {
            let mut seen = ValidatorSet::EMPTY;
            for k in 0..e {
                let c = sched.committee(epoch * e + k);
                prop_assert!(seen.intersect(c).is_empty(), "committees overlap");
                seen = seen.union(c);
            }
            prop_assert_eq!(seen, eba.total_validator_set());
        }
    }

    #[test]
    fn checkpoint_idempotence(shape in dag_shape(), e in 0i64..5) {
        let mut store = BlockStore::new(
            cfg(4), Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let ids = build_dag(&mut store, &shape);
        for &b in &ids {
            let c = store.checkpoint_of(b, e).unwrap();
            prop_assert_eq!(store.checkpoint_of(c.block, e).unwrap(), c);
            // the checkpoint block never sits past the epoch boundary
            prop_assert!(store.slot(c.block).unwrap() <= cfg(4).first_slot(e));
        }
    }

    #[test]
    fn ancestor_partial_order(shape in dag_shape()) {
        let mut store = BlockStore::new(
            cfg(4), Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let ids = build_dag(&mut store, &shape);
        for &a in &ids {
            prop_assert!(store.is_ancestor(a, a).unwrap());
            prop_assert!(!store.conflicts(a, a).unwrap());
        }
        for &a in &ids {
            for &b in &ids {
                // conflicts is symmetric, and comparable pairs never conflict
                prop_assert_eq!(store.conflicts(a, b).unwrap(), store.conflicts(b, a).unwrap());
                if store.is_ancestor(a, b).unwrap() || store.is_ancestor(b, a).unwrap() {
                    prop_assert!(!store.conflicts(a, b).unwrap());
                }
                // antisymmetry
                if a != b && store.is_ancestor(a, b).unwrap() {
                    prop_assert!(!store.is_ancestor(b, a).unwrap());
                }
            }
        }
        // transitivity along every chain
        for &d in &ids {
            let chain = store.chain(d).unwrap();
            for &m in &chain {
                prop_assert!(store.is_ancestor(m, d).unwrap());
            }
        }
    }

    #[test]
    fn weight_additivity(weights in prop::collection::vec(0u64..1000, 1..32),
                         mask_a in any::<u128>(), mask_b in any::<u128>()) {
        let n = weights.len();
        let eba = Eba::new(weights);
        let cap = if n >= 128 { u128::MAX } else { (1u128 << n) - 1 };
        let a = ValidatorSet(mask_a & cap);
        let b = ValidatorSet(mask_b & cap & !a.0);
        prop_assert!(a.intersect(b).is_empty());
        prop_assert_eq!(eba.weight(a.union(b)), eba.weight(a) + eba.weight(b));
    }

    #[test]
    fn threshold_monotone_in_beta_and_boost(
        b1 in 0i64..50, b2 in 0i64..50, wp1 in 0i64..40, wp2 in 0i64..40, w in 1i64..200,
    ) {
        let (lo, hi) = (b1.min(b2), b1.max(b2));
        let window = frac(w, 1);
        let t_lo = safe_threshold_base(&frac(lo, 100), &frac(wp1, 1), &window);
        let t_hi = safe_threshold_base(&frac(hi, 100), &frac(wp1, 1), &window);
        prop_assert!(t_lo <= t_hi, "threshold must not decrease in beta");
        let (wlo, whi) = (wp1.min(wp2), wp1.max(wp2));
        let t_wlo = safe_threshold_base(&frac(lo, 100), &frac(wlo, 1), &window);
        let t_whi = safe_threshold_base(&frac(lo, 100), &frac(whi, 1), &window);
        prop_assert!(t_wlo <= t_whi, "threshold must not decrease in the boost weight");
    }
}

/// One committee of two per slot over eight validators.
fn schedule8(epochs: usize) -> CommitteeSchedule {
    let mut committees = Vec::new();
    for _ in 0..epochs {
        committees.push(
            (0..4u32).map(|k| vec![ValidatorId(2 * k), ValidatorId(2 * k + 1)]).collect(),
        );
    }
    let proposers =
        (0..(epochs as i64 * 4)).map(|s| (s, ValidatorId((s % 8) as u32))).collect();
    CommitteeSchedule::pinned(cfg(4), committees, proposers).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_soundness(shape in dag_shape(),
                        raw_votes in prop::collection::vec((0u32..8, 0i64..16, 0usize..16), 0..40),
                        t_slot in 1i64..16) {
        let mut store = BlockStore::new(
            cfg(4), Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let ids = build_dag(&mut store, &shape);
        let sched = schedule8(6);
        let mut view = View::genesis(&store);
        for &b in &ids {
            view.add_block(&store, &sched, b, 0);
        }
        for &(signer, slot, sel) in &raw_votes {
            view.add_ghost_vote(GhostVote {
                signer: ValidatorId(signer),
                slot,
                block: ids[sel % ids.len()],
            });
        }
        let t = cfg(4).slot_start(t_slot);
        let filtered = filter_chain(&store, &sched, &view, t);
        let mut signers = BTreeSet::new();
        for vote in &filtered {
            // one vote per signer
            prop_assert!(signers.insert(vote.signer));
            // never from the current or a future slot
            prop_assert!(vote.slot < t_slot);
            // always from the committee of the vote's slot
            prop_assert!(sched.committee(vote.slot).contains(vote.signer));
            // never for a future block
            prop_assert!(store.slot(vote.block).unwrap() <= vote.slot);
            // equivocators are gone entirely
            prop_assert!(!view.equivocators().contains(vote.signer));
        }
    }

    #[test]
    fn boost_neutrality_at_zero_fraction(shape in dag_shape(),
                                         raw_votes in prop::collection::vec((0u32..8, 0i64..16, 0usize..16), 0..24),
                                         boosted_sel in 0usize..16,
                                         t_slot in 1i64..16) {
        let mut store = BlockStore::new(
            cfg(4), Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let ids = build_dag(&mut store, &shape);
        let sched = schedule8(6);
        let mut view = View::genesis(&store);
        for &b in &ids {
            view.add_block(&store, &sched, b, 0);
        }
        for &(signer, slot, sel) in &raw_votes {
            view.add_ghost_vote(GhostVote {
                signer: ValidatorId(signer),
                slot,
                block: ids[sel % ids.len()],
            });
        }
        let t = cfg(4).slot_start(t_slot);
        let eba = store.eba(store.genesis()).unwrap().clone();
        let mut boost = BoostState::default();
        boost.grant(ids[boosted_sel % ids.len()]);
        let zero = BoostWeight::resolve(boost, &BigRational::zero(), 4, &eba, false);
        let none = BoostWeight::none();
        let with = lmd_ghost(&store, &sched, &view, t, &eba, &zero);
        let without = lmd_ghost(&store, &sched, &view, t, &eba, &none);
        prop_assert_eq!(with, without, "zero boost fraction must be inert");
    }

    #[test]
    fn justification_sets_nested(links in prop::collection::vec((0u32..8, 0usize..4, 1usize..5), 0..24)) {
        // random supermajority links over a single chain with one block per
        // slot; F(b) stays inside U(b) and genesis is always justified
        let mut store = BlockStore::new(
            cfg(4), Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let mut chain = vec![store.genesis()];
        for s in 1..=12i64 {
            let votes: Vec<FfgVote> = links
                .iter()
                .filter(|(_, _src_e, tgt_e)| (*tgt_e as i64) * 3 == s) // batch per slot
                .map(|(signer, src_e, tgt_e)| {
                    let src = store.checkpoint_of(*chain.last().unwrap(), *src_e as i64).unwrap();
                    let tgt =
                        store.checkpoint_of(*chain.last().unwrap(), *tgt_e as i64).unwrap();
                    FfgVote { signer: ValidatorId(*signer), source: src, target: tgt, cast_at: s }
                })
                .collect();
            let id = store
                .insert(BlockDraft {
                    slot: s,
                    proposer: Some(ValidatorId((s % 8) as u32)),
                    parent: Some(*chain.last().unwrap()),
                    ffg_votes: votes,
                    slashing_evidence: vec![],
                    payload: 0,
                })
                .unwrap();
            chain.push(id);
        }
        let genesis_cp = store.genesis_checkpoint();
        for &b in &chain {
            let meta = &store.runtime(b).unwrap().meta;
            prop_assert!(meta.unrealized_finalized.is_subset(&meta.unrealized_justified));
            prop_assert!(meta.unrealized_justified.contains(&genesis_cp));
            // Property 7: the greatest unrealized justification never comes
            // from a later epoch than the block itself
            prop_assert!(meta.gu.epoch <= store.epoch(b).unwrap());
        }
    }

    #[test]
    fn view_checkpoints_monotone_in_time(links in prop::collection::vec((0u32..8, 0usize..3), 0..32)) {
        // a growing single chain with per-epoch supermajority links: gjView
        // and gfView never move backwards as time advances over a fixed view
        let chain_cfg = cfg(4);
        let mut store = BlockStore::new(
            chain_cfg, Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero());
        let mut chain = vec![store.genesis()];
        for s in 1..=16i64 {
            let e = chain_cfg.epoch_of_slot(s);
            let votes: Vec<FfgVote> = links
                .iter()
                .enumerate()
                .filter(|(i, _)| (*i as i64) % 16 == s - 1)
                .map(|(_, (signer, back))| {
                    let head = *chain.last().unwrap();
                    let tgt_e = (e - *back as i64).max(0);
                    let src = crate::gj_of(&store, head);
                    let tgt = store.checkpoint_of(head, tgt_e).unwrap();
                    FfgVote { signer: ValidatorId(*signer), source: src, target: tgt, cast_at: s }
                })
                .collect();
            let id = store
                .insert(BlockDraft {
                    slot: s,
                    proposer: Some(ValidatorId((s % 8) as u32)),
                    parent: Some(*chain.last().unwrap()),
                    ffg_votes: votes,
                    slashing_evidence: vec![],
                    payload: 0,
                })
                .unwrap();
            chain.push(id);
        }
        let blocks: Vec<BlockId> = chain.clone();
        let mut last_gj = store.genesis_checkpoint();
        let mut last_gf = store.genesis_checkpoint();
        for s in 0..=17i64 {
            let t = chain_cfg.slot_start(s);
            let gj = gj_view(&store, blocks.iter().copied(), t);
            let gf = gf_view(&store, blocks.iter().copied(), t);
            prop_assert!(gj.epoch >= last_gj.epoch, "gjView moved backwards");
            prop_assert!(gf.epoch >= last_gf.epoch, "gfView moved backwards");
            last_gj = gj;
            last_gf = gf;
        }
    }
}

/// GJ(b) of a block already in the store.
fn gj_of(store: &BlockStore, b: BlockId) -> gasper_confirm::chain::Checkpoint {
    store.runtime(b).unwrap().meta.gj
}

#[test]
fn committee_union_block_anchored_form() {
    // the block-anchored window starts right after the parent slot
    let mut store = BlockStore::new(
        cfg(4),
        Eba::uniform(8, 1),
        ChurnSchedule::new(),
        BigRational::zero(),
    );
    let ids = build_dag(&mut store, &[(0, 2), (1, 3)]);
    let b = ids[2];
    assert_eq!(store.parent_slot_plus_one(b).unwrap(), store.slot(ids[1]).unwrap() + 1);
    let sched = schedule8(4);
    let window: Slot = 7;
    let anchored = sched.committee_union(store.parent_slot_plus_one(b).unwrap(), window);
    assert_eq!(anchored, sched.committee_union(3, 7));
}
