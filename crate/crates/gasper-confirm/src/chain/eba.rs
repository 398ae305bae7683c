use std::fmt;

use serde::{Deserialize, Serialize};

/// Hard cap on the number of validators so that validator sets fit in a
/// single `u128` bitmask. Plenty for desk-scale runs.
pub const MAX_VALIDATORS: usize = 128;

/// Validator identity: a dense index into the scenario's validator table.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl ValidatorId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// A set of validators as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ValidatorSet(pub u128);

impl ValidatorSet {
    pub const EMPTY: ValidatorSet = ValidatorSet(0);

    #[inline]
    pub fn singleton(v: ValidatorId) -> Self {
        ValidatorSet(1u128 << v.index())
    }

    #[inline]
    pub fn contains(&self, v: ValidatorId) -> bool {
        self.0 & (1u128 << v.index()) != 0
    }

    #[inline]
    pub fn insert(&mut self, v: ValidatorId) {
        self.0 |= 1u128 << v.index();
    }

    #[inline]
    pub fn remove(&mut self, v: ValidatorId) {
        self.0 &= !(1u128 << v.index());
    }

    #[inline]
    pub fn union(self, other: ValidatorSet) -> ValidatorSet {
        ValidatorSet(self.0 | other.0)
    }

    #[inline]
    pub fn intersect(self, other: ValidatorSet) -> ValidatorSet {
        ValidatorSet(self.0 & other.0)
    }

    #[inline]
    pub fn difference(self, other: ValidatorSet) -> ValidatorSet {
        ValidatorSet(self.0 & !other.0)
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn iter(self) -> impl Iterator<Item = ValidatorId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros();
                bits &= bits - 1;
                Some(ValidatorId(i))
            }
        })
    }

    pub fn from_ids<I: IntoIterator<Item = ValidatorId>>(ids: I) -> Self {
        let mut s = ValidatorSet::EMPTY;
        for v in ids {
            s.insert(v);
        }
        s
    }
}

impl FromIterator<ValidatorId> for ValidatorSet {
    fn from_iter<T: IntoIterator<Item = ValidatorId>>(iter: T) -> Self {
        ValidatorSet::from_ids(iter)
    }
}

/// Effective-balance assignment: validator index -> integer weight.
///
/// Weights stay integral so that quorum comparisons can be done in exact
/// rational arithmetic; all aggregate sums fit in `u128` at desk scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Eba {
    weights: Vec<u64>,
}

impl Eba {
    pub fn new(weights: Vec<u64>) -> Self {
        assert!(weights.len() <= MAX_VALIDATORS, "too many validators");
        Eba { weights }
    }

    pub fn uniform(n: usize, w: u64) -> Self {
        Eba::new(vec![w; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn weight_of(&self, v: ValidatorId) -> u64 {
        self.weights.get(v.index()).copied().unwrap_or(0)
    }

    pub fn set_weight(&mut self, v: ValidatorId, w: u64) {
        let i = v.index();
        if i >= self.weights.len() {
            self.weights.resize(i + 1, 0);
        }
        self.weights[i] = w;
    }

    /// Validators with non-zero weight.
    pub fn total_validator_set(&self) -> ValidatorSet {
        let mut s = ValidatorSet::EMPTY;
        for (i, &w) in self.weights.iter().enumerate() {
            if w > 0 {
                s.insert(ValidatorId(i as u32));
            }
        }
        s
    }

    /// Weight of a validator set under this assignment. Additive over
    /// disjoint unions by construction.
    pub fn weight(&self, set: ValidatorSet) -> u128 {
        set.iter().map(|v| self.weight_of(v) as u128).sum()
    }

    pub fn total_weight(&self) -> u128 {
        self.weight(self.total_validator_set())
    }

    /// Per-validator deltas between `parent` and `self`, for compact
    /// serialization of block stores.
    pub fn deltas_from(&self, parent: &Eba) -> Vec<(ValidatorId, u64)> {
        let n = self.weights.len().max(parent.weights.len());
        let mut out = Vec::new();
        for i in 0..n {
            let v = ValidatorId(i as u32);
            if self.weight_of(v) != parent.weight_of(v) {
                out.push((v, self.weight_of(v)));
            }
        }
        out
    }

    pub fn apply_deltas(&self, deltas: &[(ValidatorId, u64)]) -> Eba {
        let mut out = self.clone();
        for &(v, w) in deltas {
            out.set_weight(v, w);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_additivity_exact() {
        let eba = Eba::new(vec![3, 0, 5, 7, 11]);
        let a = ValidatorSet::from_ids([ValidatorId(0), ValidatorId(2)]);
        let b = ValidatorSet::from_ids([ValidatorId(3), ValidatorId(4)]);
        assert!(a.intersect(b).is_empty());
        assert_eq!(eba.weight(a.union(b)), eba.weight(a) + eba.weight(b));
        assert_eq!(eba.total_weight(), 26);
        // zero-weight validator is not in the total set
        assert!(!eba.total_validator_set().contains(ValidatorId(1)));
    }

    #[test]
    fn set_ops() {
        let mut s = ValidatorSet::EMPTY;
        s.insert(ValidatorId(7));
        s.insert(ValidatorId(0));
        assert_eq!(s.len(), 2);
        let ids: Vec<_> = s.iter().collect();
        assert_eq!(ids, vec![ValidatorId(0), ValidatorId(7)]);
        s.remove(ValidatorId(0));
        assert!(!s.contains(ValidatorId(0)));
    }

    #[test]
    fn delta_roundtrip() {
        let a = Eba::new(vec![10, 10, 10]);
        let mut b = a.clone();
        b.set_weight(ValidatorId(1), 4);
        let d = b.deltas_from(&a);
        assert_eq!(d, vec![(ValidatorId(1), 4)]);
        assert_eq!(a.apply_deltas(&d), b);
    }
}
