use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

use crate::chain::{ChainConfig, ChurnSchedule, Eba, Epoch, Slot, ValidatorId, ValidatorSet};

fn rng_for(seed: u64, tag: &str, index: i64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(tag.as_bytes());
    h.update(index.to_be_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// Per-epoch committee partition plus a per-slot proposer table, fully
/// determined by (seed, epoch). Every honest process derives this same
/// schedule, which is the only property the protocol relies on.
#[derive(Debug, Clone)]
pub struct CommitteeSchedule {
    cfg: ChainConfig,
    /// committees[e][k] = members of the committee voting in slot firstSlot(e)+k.
    committees: Vec<Vec<ValidatorSet>>,
    proposers: BTreeMap<Slot, ValidatorId>,
    active: Vec<ValidatorSet>,
}

impl CommitteeSchedule {
    /// Derive the schedule for epochs `0..num_epochs`. The active set of an
    /// epoch is the set of validators with positive scheduled balance at the
    /// start of that epoch (genesis balances plus churn updates).
    pub fn derive(
        seed: u64,
        cfg: ChainConfig,
        genesis_eba: &Eba,
        churn: &ChurnSchedule,
        num_epochs: usize,
    ) -> Self {
        let mut eba = genesis_eba.clone();
        let mut committees = Vec::with_capacity(num_epochs);
        let mut proposers = BTreeMap::new();
        let mut active = Vec::with_capacity(num_epochs);
        for e in 0..num_epochs as Epoch {
            if e > 0 {
                if let Some(updates) = churn.get(&e) {
                    for &(v, w) in updates {
                        eba.set_weight(v, w);
                    }
                }
            }
            let mut ids: Vec<ValidatorId> = eba.total_validator_set().iter().collect();
            let mut rng = rng_for(seed, "committee", e);
            ids.shuffle(&mut rng);
            committees.push(split_into_committees(&ids, cfg.slots_per_epoch as usize));
            active.push(ValidatorSet::from_ids(ids.iter().copied()));

            let pool: Vec<ValidatorId> = {
                let mut p: Vec<ValidatorId> = eba.total_validator_set().iter().collect();
                p.sort();
                p
            };
            for k in 0..cfg.slots_per_epoch {
                let s = cfg.first_slot(e) + k;
                let mut rng = rng_for(seed, "proposer", s);
                let idx = rand::Rng::gen_range(&mut rng, 0..pool.len());
                proposers.insert(s, pool[idx]);
            }
        }
        CommitteeSchedule { cfg, committees, proposers, active }
    }

    /// Explicit tables for scripted scenarios. `committees[e]` must be an
    /// exact partition of that epoch's intended active set into E parts.
    pub fn pinned(
        cfg: ChainConfig,
        committees: Vec<Vec<Vec<ValidatorId>>>,
        proposers: BTreeMap<Slot, ValidatorId>,
    ) -> Result<Self, String> {
        let mut sets = Vec::with_capacity(committees.len());
        let mut active = Vec::with_capacity(committees.len());
        for (e, epoch_committees) in committees.iter().enumerate() {
            if epoch_committees.len() != cfg.slots_per_epoch as usize {
                return Err(format!(
                    "epoch {e}: expected {} committees, got {}",
                    cfg.slots_per_epoch,
                    epoch_committees.len()
                ));
            }
            let mut seen = ValidatorSet::EMPTY;
            let mut epoch_sets = Vec::new();
            for (k, members) in epoch_committees.iter().enumerate() {
                let set = ValidatorSet::from_ids(members.iter().copied());
                if set.len() as usize != members.len() {
                    return Err(format!("epoch {e} committee {k}: duplicate member"));
                }
                if !seen.intersect(set).is_empty() {
                    return Err(format!("epoch {e} committee {k}: overlaps another committee"));
                }
                seen = seen.union(set);
                epoch_sets.push(set);
            }
            sets.push(epoch_sets);
            active.push(seen);
        }
        Ok(CommitteeSchedule { cfg, committees: sets, proposers, active })
    }

    pub fn num_epochs(&self) -> usize {
        self.committees.len()
    }

    pub fn active_set(&self, e: Epoch) -> ValidatorSet {
        if e < 0 {
            return ValidatorSet::EMPTY;
        }
        self.active.get(e as usize).copied().unwrap_or(ValidatorSet::EMPTY)
    }

    /// The committee voting in slot `s`; empty outside the derived horizon.
    pub fn committee(&self, s: Slot) -> ValidatorSet {
        if s < 0 {
            return ValidatorSet::EMPTY;
        }
        let e = self.cfg.epoch_of_slot(s);
        let k = (s - self.cfg.first_slot(e)) as usize;
        self.committees
            .get(e as usize)
            .and_then(|epoch| epoch.get(k))
            .copied()
            .unwrap_or(ValidatorSet::EMPTY)
    }

    /// Union of the committees of slots `from..=to`; empty when from > to.
    pub fn committee_union(&self, from: Slot, to: Slot) -> ValidatorSet {
        let mut out = ValidatorSet::EMPTY;
        let mut s = from.max(0);
        while s <= to {
            out = out.union(self.committee(s));
            s += 1;
        }
        out
    }

    pub fn proposer(&self, s: Slot) -> Option<ValidatorId> {
        self.proposers.get(&s).copied()
    }
}

fn split_into_committees(ids: &[ValidatorId], parts: usize) -> Vec<ValidatorSet> {
    let n = ids.len();
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0usize;
    for k in 0..parts {
        let size = base + usize::from(k < extra);
        out.push(ValidatorSet::from_ids(ids[start..start + size].iter().copied()));
        start += size;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e: i64) -> ChainConfig {
        ChainConfig { slots_per_epoch: e, ticks_per_slot: 12, vote_offset_ticks: 4 }
    }

    #[test]
    fn partition_property() {
        let eba = Eba::uniform(8, 1);
        let sched = CommitteeSchedule::derive(7, cfg(2), &eba, &ChurnSchedule::new(), 3);
        for e in 0..3i64 {
            let mut seen = ValidatorSet::EMPTY;
            let mut total = 0;
            for k in 0..2 {
                let c = sched.committee(e * 2 + k);
                assert!(seen.intersect(c).is_empty(), "committees overlap");
                seen = seen.union(c);
                total += c.len();
            }
            assert_eq!(total, 8, "committees must cover the active set");
            assert_eq!(seen, eba.total_validator_set());
        }
    }

    #[test]
    fn union_over_epoch_covers_everyone() {
        let eba = Eba::uniform(8, 1);
        let sched = CommitteeSchedule::derive(3, cfg(2), &eba, &ChurnSchedule::new(), 2);
        assert_eq!(sched.committee_union(0, 1), eba.total_validator_set());
        // empty range
        assert!(sched.committee_union(5, 4).is_empty());
        // single-slot union equals the committee
        assert_eq!(sched.committee_union(1, 1), sched.committee(1));
    }

    #[test]
    fn deterministic_from_seed() {
        let eba = Eba::uniform(16, 1);
        let a = CommitteeSchedule::derive(42, cfg(4), &eba, &ChurnSchedule::new(), 4);
        let b = CommitteeSchedule::derive(42, cfg(4), &eba, &ChurnSchedule::new(), 4);
        for s in 0..16 {
            assert_eq!(a.committee(s), b.committee(s));
            assert_eq!(a.proposer(s), b.proposer(s));
        }
        let c = CommitteeSchedule::derive(43, cfg(4), &eba, &ChurnSchedule::new(), 4);
        let same = (0..16).all(|s| a.committee(s) == c.committee(s));
        assert!(!same, "different seeds should shuffle differently");
    }

    #[test]
    fn pinned_tables_validated() {
        let ids = |xs: &[u32]| xs.iter().map(|&i| ValidatorId(i)).collect::<Vec<_>>();
        let ok = CommitteeSchedule::pinned(
            cfg(2),
            vec![vec![ids(&[0, 1]), ids(&[2, 3])]],
            BTreeMap::new(),
        );
        assert!(ok.is_ok());
        let overlap = CommitteeSchedule::pinned(
            cfg(2),
            vec![vec![ids(&[0, 1]), ids(&[1, 2])]],
            BTreeMap::new(),
        );
        assert!(overlap.is_err());
    }
}
