use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{ChainConfig, Eba, Epoch, Slot, ValidatorId, ValidatorSet};
use crate::ffg::{FfgVote, JustificationMeta};

/// Content hash identifying a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub [u8; 32]);

impl BlockId {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..4])
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", hex::encode(self.0))
    }
}

impl Serialize for BlockId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for BlockId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(D::Error::custom)?;
        let arr: [u8; 32] = bytes.try_into().map_err(|_| D::Error::custom("bad block id"))?;
        Ok(BlockId(arr))
    }
}

/// A (block, epoch) pair.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Checkpoint {
    pub epoch: Epoch,
    pub block: BlockId,
}

impl Checkpoint {
    pub fn new(block: BlockId, epoch: Epoch) -> Self {
        Checkpoint { epoch, block }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub slot: Slot,
    /// `None` only for genesis.
    pub proposer: Option<ValidatorId>,
    pub parent: Option<BlockId>,
    pub ffg_votes: Vec<FfgVote>,
    /// Validators convicted by evidence carried in this block.
    pub slashing_evidence: Vec<ValidatorId>,
    /// Distinguishes otherwise-identical proposals (equivocation).
    pub payload: u64,
}

/// Everything needed to create a block; the id is derived.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlockDraft {
    pub slot: Slot,
    pub proposer: Option<ValidatorId>,
    pub parent: Option<BlockId>,
    pub ffg_votes: Vec<FfgVote>,
    pub slashing_evidence: Vec<ValidatorId>,
    pub payload: u64,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChainError {
    #[error("unknown block {0}")]
    UnknownBlock(String),
    #[error("block slot {child} not after parent slot {parent}")]
    SlotNotAfterParent { parent: Slot, child: Slot },
    #[error("incomplete chain: missing ancestor of {0}")]
    IncompleteChain(String),
    #[error("duplicate block {0}")]
    DuplicateBlock(String),
    #[error("voting source undefined: block epoch {block_epoch} > query epoch {query}")]
    UndefinedVotingSource { block_epoch: Epoch, query: Epoch },
}

fn derive_id(draft: &BlockDraft) -> BlockId {
    let mut h = Sha256::new();
    h.update(draft.slot.to_be_bytes());
    match draft.proposer {
        Some(p) => {
            h.update([1u8]);
            h.update(p.0.to_be_bytes());
        }
        None => h.update([0u8; 5]),
    }
    match draft.parent {
        Some(p) => {
            h.update([1u8]);
            h.update(p.0);
        }
        None => h.update([0u8]),
    }
    h.update(draft.payload.to_be_bytes());
    // Vote content is not hashed: a proposer equivocating with identical
    // payloads is the degenerate same-block case, and payloads give the
    // adversary all the distinctness it needs.
    BlockId(h.finalize().into())
}

/// Per-block data derived at insertion time.
#[derive(Debug, Clone)]
pub struct BlockRuntime {
    pub eba: Eba,
    /// Validators slashed according to evidence in this chain (D^b).
    pub slashed: ValidatorSet,
    /// Exact penalty applied per validator newly convicted by this block.
    pub slash_cuts: Vec<(ValidatorId, u64)>,
    /// Highest strict ancestor from an earlier epoch, if any.
    pub prev_epoch_ancestor: Option<BlockId>,
    pub meta: JustificationMeta,
}

/// Epoch-indexed explicit balance updates: (validator, new weight) pairs
/// applied when a chain crosses the epoch boundary.
pub type ChurnSchedule = BTreeMap<Epoch, Vec<(ValidatorId, u64)>>;

/// Global, append-only DAG of all blocks created in a run. Views reference
/// blocks by id; everything chain-intrinsic (EBA, slashing, justification)
/// is derived here exactly once.
#[derive(Debug, Clone)]
pub struct BlockStore {
    cfg: ChainConfig,
    blocks: BTreeMap<BlockId, Block>,
    runtime: BTreeMap<BlockId, BlockRuntime>,
    children: BTreeMap<BlockId, Vec<BlockId>>,
    insertion_order: Vec<BlockId>,
    genesis: BlockId,
    churn: ChurnSchedule,
    slash_penalty: BigRational,
}

impl BlockStore {
    pub fn new(
        cfg: ChainConfig,
        genesis_eba: Eba,
        churn: ChurnSchedule,
        slash_penalty: BigRational,
    ) -> Self {
        let draft = BlockDraft {
            slot: 0,
            proposer: None,
            parent: None,
            ffg_votes: Vec::new(),
            slashing_evidence: Vec::new(),
            payload: 0,
        };
        let id = derive_id(&draft);
        let genesis = Block {
            id,
            slot: 0,
            proposer: None,
            parent: None,
            ffg_votes: Vec::new(),
            slashing_evidence: Vec::new(),
            payload: 0,
        };
        let meta = JustificationMeta::genesis(Checkpoint::new(id, 0));
        let runtime = BlockRuntime {
            eba: genesis_eba,
            slashed: ValidatorSet::EMPTY,
            slash_cuts: Vec::new(),
            prev_epoch_ancestor: None,
            meta,
        };
        let mut store = BlockStore {
            cfg,
            blocks: BTreeMap::new(),
            runtime: BTreeMap::new(),
            children: BTreeMap::new(),
            insertion_order: vec![id],
            genesis: id,
            churn,
            slash_penalty,
        };
        store.blocks.insert(id, genesis);
        store.runtime.insert(id, runtime);
        store
    }

    pub fn cfg(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    pub fn genesis_checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.genesis, 0)
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn get(&self, id: BlockId) -> Result<&Block, ChainError> {
        self.blocks.get(&id).ok_or_else(|| ChainError::UnknownBlock(id.short()))
    }

    pub fn runtime(&self, id: BlockId) -> Result<&BlockRuntime, ChainError> {
        self.runtime.get(&id).ok_or_else(|| ChainError::UnknownBlock(id.short()))
    }

    pub fn eba(&self, id: BlockId) -> Result<&Eba, ChainError> {
        Ok(&self.runtime(id)?.eba)
    }

    pub fn slot(&self, id: BlockId) -> Result<Slot, ChainError> {
        Ok(self.get(id)?.slot)
    }

    pub fn parent(&self, id: BlockId) -> Result<Option<BlockId>, ChainError> {
        Ok(self.get(id)?.parent)
    }

    pub fn children(&self, id: BlockId) -> &[BlockId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn epoch(&self, id: BlockId) -> Result<Epoch, ChainError> {
        Ok(self.cfg.epoch_of_slot(self.get(id)?.slot))
    }

    /// Total order on blocks: (slot, id), used wherever ties must break
    /// deterministically.
    pub fn order_key(&self, id: BlockId) -> (Slot, BlockId) {
        (self.blocks.get(&id).map(|b| b.slot).unwrap_or(i64::MAX), id)
    }

    pub fn ids_in_insertion_order(&self) -> &[BlockId] {
        &self.insertion_order
    }

    pub fn len(&self) -> usize {
        self.insertion_order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.insertion_order.is_empty()
    }

    pub fn insert(&mut self, draft: BlockDraft) -> Result<BlockId, ChainError> {
        let id = derive_id(&draft);
        if self.blocks.contains_key(&id) {
            return Err(ChainError::DuplicateBlock(id.short()));
        }
        let parent_id = draft.parent.ok_or(ChainError::IncompleteChain(id.short()))?;
        let parent = self.get(parent_id)?.clone();
        if draft.slot <= parent.slot {
            return Err(ChainError::SlotNotAfterParent { parent: parent.slot, child: draft.slot });
        }
        let parent_rt = self.runtime(parent_id)?.clone();

        let parent_epoch = self.cfg.epoch_of_slot(parent.slot);
        let child_epoch = self.cfg.epoch_of_slot(draft.slot);

        // Scheduled balance updates for every epoch boundary crossed.
        let mut eba = parent_rt.eba.clone();
        for e in (parent_epoch + 1)..=child_epoch {
            if let Some(updates) = self.churn.get(&e) {
                for &(v, w) in updates {
                    eba.set_weight(v, w);
                }
            }
        }
        // Newly included slashing evidence: penalty of floor(sigma * w).
        let mut slashed = parent_rt.slashed;
        let mut slash_cuts = Vec::new();
        for &v in &draft.slashing_evidence {
            if !slashed.contains(v) {
                slashed.insert(v);
                let w = eba.weight_of(v);
                let cut = (&self.slash_penalty * BigRational::from_integer(w.into()))
                    .floor()
                    .to_integer()
                    .to_u64()
                    .unwrap_or(w)
                    .min(w);
                eba.set_weight(v, w - cut);
                slash_cuts.push((v, cut));
            }
        }

        let prev_epoch_ancestor = if parent_epoch < child_epoch {
            Some(parent_id)
        } else {
            parent_rt.prev_epoch_ancestor
        };

        let block = Block {
            id,
            slot: draft.slot,
            proposer: draft.proposer,
            parent: Some(parent_id),
            ffg_votes: draft.ffg_votes,
            slashing_evidence: draft.slashing_evidence,
            payload: draft.payload,
        };

        let meta = JustificationMeta::for_block(self, &block, &parent_rt, prev_epoch_ancestor, &eba);

        self.insertion_order.push(id);
        self.blocks.insert(block.id, block);
        let mut siblings = self.children.remove(&parent_id).unwrap_or_default();
        siblings.push(id);
        siblings.sort_by_key(|c| self.order_key(*c));
        self.children.insert(parent_id, siblings);
        self.runtime.insert(id, BlockRuntime { eba, slashed, slash_cuts, prev_epoch_ancestor, meta });
        Ok(id)
    }

    /// True iff `a` is an ancestor of (or equal to) `d`.
    pub fn is_ancestor(&self, a: BlockId, d: BlockId) -> Result<bool, ChainError> {
        let target_slot = self.slot(a)?;
        let mut cur = d;
        loop {
            let b = self.get(cur)?;
            if cur == a {
                return Ok(true);
            }
            if b.slot <= target_slot {
                return Ok(false);
            }
            match b.parent {
                Some(p) => cur = p,
                None => return Ok(false),
            }
        }
    }

    /// Neither block reaches the other by parent traversal.
    pub fn conflicts(&self, x: BlockId, y: BlockId) -> Result<bool, ChainError> {
        Ok(!self.is_ancestor(x, y)? && !self.is_ancestor(y, x)?)
    }

    /// The epoch-`e` checkpoint in the chain of `b`: the highest-slot
    /// ancestor at or before the first slot of `e`, paired with `e`.
    pub fn checkpoint_of(&self, b: BlockId, e: Epoch) -> Result<Checkpoint, ChainError> {
        let boundary = self.cfg.first_slot(e);
        let mut cur = b;
        loop {
            let blk = self.get(cur)?;
            if blk.slot <= boundary {
                return Ok(Checkpoint::new(cur, e));
            }
            cur = blk.parent.ok_or(ChainError::IncompleteChain(cur.short()))?;
        }
    }

    /// The latest checkpoint of `b`: C(b, epoch(b)).
    pub fn latest_checkpoint(&self, b: BlockId) -> Result<Checkpoint, ChainError> {
        self.checkpoint_of(b, self.epoch(b)?)
    }

    /// Checkpoint/block comparability: b precedes C iff b is an ancestor
    /// of block(C).
    pub fn block_within_checkpoint(&self, b: BlockId, c: Checkpoint) -> Result<bool, ChainError> {
        self.is_ancestor(b, c.block)
    }

    /// Semantic checkpoint max: greatest epoch, ties by block order.
    pub fn max_checkpoint<I: IntoIterator<Item = Checkpoint>>(&self, cps: I) -> Option<Checkpoint> {
        cps.into_iter().max_by_key(|c| (c.epoch, self.order_key(c.block)))
    }

    /// Chain of `b` from `b` down to genesis.
    pub fn chain(&self, b: BlockId) -> Result<Vec<BlockId>, ChainError> {
        let mut out = Vec::new();
        let mut cur = b;
        loop {
            out.push(cur);
            match self.get(cur)?.parent {
                Some(p) => cur = p,
                None => return Ok(out),
            }
        }
    }

    /// ps+1(b): the slot after the parent of b.
    pub fn parent_slot_plus_one(&self, b: BlockId) -> Result<Slot, ChainError> {
        match self.get(b)?.parent {
            Some(p) => Ok(self.slot(p)? + 1),
            None => Ok(1),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for id in &self.insertion_order {
            let b = &self.blocks[id];
            let parent_eba = b
                .parent
                .map(|p| self.runtime[&p].eba.clone())
                .unwrap_or_else(|| Eba::new(vec![]));
            let rec = BlockRecord {
                id: b.id,
                slot: b.slot,
                proposer: b.proposer,
                parent: b.parent,
                ffg_votes: b.ffg_votes.clone(),
                slashings: b.slashing_evidence.clone(),
                eba_deltas: self.runtime[id].eba.deltas_from(&parent_eba),
                payload: Some(b.payload),
            };
            out.push_str(&serde_json::to_string(&rec).expect("serialize block record"));
            out.push('\n');
        }
        out
    }

    /// Rebuilds a store from its JSONL form by replaying inserts; recorded
    /// ids and balance deltas must match what the replay derives.
    pub fn from_jsonl(
        jsonl: &str,
        cfg: ChainConfig,
        genesis_eba: Eba,
        churn: ChurnSchedule,
        slash_penalty: BigRational,
    ) -> Result<Self, ChainError> {
        let mut store = BlockStore::new(cfg, genesis_eba, churn, slash_penalty);
        for line in jsonl.lines().filter(|l| !l.trim().is_empty()) {
            let rec: BlockRecord =
                serde_json::from_str(line).map_err(|e| ChainError::UnknownBlock(e.to_string()))?;
            if rec.parent.is_none() {
                if rec.id != store.genesis {
                    return Err(ChainError::UnknownBlock("genesis mismatch".into()));
                }
                continue;
            }
            let payload = rec.payload_from_record();
            let id = store.insert(BlockDraft {
                slot: rec.slot,
                proposer: rec.proposer,
                parent: rec.parent,
                ffg_votes: rec.ffg_votes,
                slashing_evidence: rec.slashings,
                payload,
            })?;
            if id != rec.id {
                return Err(ChainError::UnknownBlock(format!(
                    "id mismatch on replay: {} vs {}",
                    id.short(),
                    rec.id.short()
                )));
            }
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockRecord {
    id: BlockId,
    slot: Slot,
    proposer: Option<ValidatorId>,
    parent: Option<BlockId>,
    ffg_votes: Vec<FfgVote>,
    slashings: Vec<ValidatorId>,
    eba_deltas: Vec<(ValidatorId, u64)>,
    #[serde(default)]
    payload: Option<u64>,
}

impl BlockRecord {
    fn payload_from_record(&self) -> u64 {
        self.payload.unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn test_store(e: i64) -> BlockStore {
        let cfg = ChainConfig { slots_per_epoch: e, ticks_per_slot: 12, vote_offset_ticks: 4 };
        BlockStore::new(cfg, Eba::uniform(8, 1), ChurnSchedule::new(), BigRational::zero())
    }

    fn child(store: &mut BlockStore, parent: BlockId, slot: Slot) -> BlockId {
        store
            .insert(BlockDraft {
                slot,
                proposer: Some(ValidatorId(0)),
                parent: Some(parent),
                ffg_votes: vec![],
                slashing_evidence: vec![],
                payload: 0,
            })
            .unwrap()
    }

    #[test]
    fn ancestor_and_conflicts() {
        let mut s = test_store(8);
        let g = s.genesis();
        let a = child(&mut s, g, 1);
        let b = child(&mut s, a, 2);
        let c = child(&mut s, g, 3);
        assert!(s.is_ancestor(g, g).unwrap());
        assert!(s.is_ancestor(g, b).unwrap());
        assert!(s.is_ancestor(a, b).unwrap());
        assert!(!s.is_ancestor(b, a).unwrap());
        assert!(s.conflicts(b, c).unwrap());
        assert!(!s.conflicts(a, b).unwrap());
        assert!(s.conflicts(c, b).unwrap());
        assert!(s.get(BlockId([9; 32])).is_err());
    }

    #[test]
    fn slot_must_advance() {
        let mut s = test_store(8);
        let g = s.genesis();
        let a = child(&mut s, g, 3);
        let err = s.insert(BlockDraft {
            slot: 3,
            proposer: Some(ValidatorId(1)),
            parent: Some(a),
            ffg_votes: vec![],
            slashing_evidence: vec![],
            payload: 0,
        });
        assert!(matches!(err, Err(ChainError::SlotNotAfterParent { .. })));
    }

    #[test]
    fn checkpoint_boundary_semantics() {
        // E = 8: the epoch-e checkpoint block is the highest-slot ancestor
        // at or before slot 8e.
        let mut s = test_store(8);
        let g = s.genesis();
        let b1 = child(&mut s, g, 3);
        let b2 = child(&mut s, b1, 9);
        assert_eq!(s.checkpoint_of(g, 0).unwrap(), Checkpoint::new(g, 0));
        assert_eq!(s.checkpoint_of(b1, 0).unwrap(), Checkpoint::new(g, 0));
        assert_eq!(s.checkpoint_of(b1, 1).unwrap(), Checkpoint::new(b1, 1));
        assert_eq!(s.checkpoint_of(b2, 1).unwrap(), Checkpoint::new(b1, 1));
        assert_eq!(s.checkpoint_of(b2, 2).unwrap(), Checkpoint::new(b2, 2));
        // exact-boundary block is its own checkpoint block
        let b3 = child(&mut s, b2, 16);
        assert_eq!(s.checkpoint_of(b3, 2).unwrap(), Checkpoint::new(b3, 2));
    }

    #[test]
    fn checkpoint_idempotent() {
        let mut s = test_store(8);
        let g = s.genesis();
        let b1 = child(&mut s, g, 3);
        let b2 = child(&mut s, b1, 9);
        for b in [g, b1, b2] {
            for e in 0..4 {
                let c = s.checkpoint_of(b, e).unwrap();
                assert_eq!(s.checkpoint_of(c.block, e).unwrap(), c);
            }
        }
    }

    #[test]
    fn slashing_penalty_and_propagation() {
        // sigma = 1/2 over weight 5: cut = floor(5/2) = 2, and conviction
        // carries into every descendant exactly once
        let cfg = ChainConfig { slots_per_epoch: 4, ticks_per_slot: 12, vote_offset_ticks: 4 };
        let mut s = BlockStore::new(
            cfg,
            Eba::uniform(4, 5),
            ChurnSchedule::new(),
            BigRational::new(1.into(), 2.into()),
        );
        let g = s.genesis();
        let a = s
            .insert(BlockDraft {
                slot: 1,
                proposer: Some(ValidatorId(0)),
                parent: Some(g),
                ffg_votes: vec![],
                slashing_evidence: vec![ValidatorId(2)],
                payload: 0,
            })
            .unwrap();
        let rt = s.runtime(a).unwrap();
        assert!(rt.slashed.contains(ValidatorId(2)));
        assert_eq!(rt.slash_cuts, vec![(ValidatorId(2), 2)]);
        assert_eq!(rt.eba.weight_of(ValidatorId(2)), 3);
        assert_eq!(rt.eba.total_weight(), 18);
        // re-convicting in a descendant is a no-op
        let b = s
            .insert(BlockDraft {
                slot: 2,
                proposer: Some(ValidatorId(1)),
                parent: Some(a),
                ffg_votes: vec![],
                slashing_evidence: vec![ValidatorId(2)],
                payload: 0,
            })
            .unwrap();
        let rt = s.runtime(b).unwrap();
        assert!(rt.slashed.contains(ValidatorId(2)));
        assert!(rt.slash_cuts.is_empty());
        assert_eq!(rt.eba.weight_of(ValidatorId(2)), 3);
        // genesis stays untouched
        assert_eq!(s.runtime(g).unwrap().eba.weight_of(ValidatorId(2)), 5);
    }

    #[test]
    fn jsonl_roundtrip() {
        let mut s = test_store(4);
        let g = s.genesis();
        let a = child(&mut s, g, 1);
        let _b = child(&mut s, a, 2);
        let jsonl = s.to_jsonl();
        let s2 = BlockStore::from_jsonl(
            &jsonl,
            *s.cfg(),
            Eba::uniform(8, 1),
            ChurnSchedule::new(),
            BigRational::zero(),
        )
        .unwrap();
        assert_eq!(s2.to_jsonl(), jsonl);
        assert_eq!(s2.len(), 3);
    }
}
