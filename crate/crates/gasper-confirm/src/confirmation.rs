//! The four block-confirmation rules: safety indicators, safety conditions,
//! justification-projection thresholds and the cached isConfirmed variants.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chain::{
    BlockId, BlockStore, Checkpoint, CommitteeSchedule, Eba, Epoch, Slot, Tick, ValidatorSet,
};
use crate::ffg::voting_source;
use crate::fork_choice::filter_chain;
use crate::view::View;

pub fn rat_int(x: u128) -> BigRational {
    BigRational::from_integer(BigInt::from(x))
}

pub fn frac(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Rational bounds on sqrt(x) within `tol`, by bisection. Exact arithmetic
/// throughout; used for the irrational admissibility bound of the
/// all-history rule.
pub fn sqrt_bounds(x: &BigRational, tol: &BigRational) -> (BigRational, BigRational) {
    assert!(!x.is_negative());
    let mut lo = BigRational::zero();
    let mut hi = x.clone().max(BigRational::one());
    while &hi - &lo > *tol {
        let mid = (&lo + &hi) / rat_int(2);
        if &mid * &mid <= *x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, hi)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IndicatorError {
    #[error("undefined indicator: empty committee window")]
    UndefinedIndicator,
    #[error("inadmissible parameters: {0}")]
    Inadmissible(String),
}

/// Which confirmation rule to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConfirmationRule {
    /// Plain LMD-GHOST rule (cached safety condition).
    Lmd,
    /// LMD-GHOST-HFC rule with justification projection.
    Hfc,
    /// HFC rule hardened for validator-set and balance churn.
    Churn,
    /// All-history variant with the finality short-circuit.
    Appendix,
}

impl ConfirmationRule {
    pub const ALL: [ConfirmationRule; 4] = [
        ConfirmationRule::Lmd,
        ConfirmationRule::Hfc,
        ConfirmationRule::Churn,
        ConfirmationRule::Appendix,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ConfirmationRule::Lmd => "lmd",
            ConfirmationRule::Hfc => "hfc",
            ConfirmationRule::Churn => "churn",
            ConfirmationRule::Appendix => "appendix",
        }
    }
}

impl FromStr for ConfirmationRule {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lmd" => Ok(ConfirmationRule::Lmd),
            "hfc" => Ok(ConfirmationRule::Hfc),
            "churn" => Ok(ConfirmationRule::Churn),
            "appendix" => Ok(ConfirmationRule::Appendix),
            other => Err(format!("unknown rule '{other}' (expected lmd|hfc|churn|appendix)")),
        }
    }
}

/// Every tunable the rules and their auditors consume. All rationals are
/// exact; quorum comparisons never touch floating point.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyParams {
    /// Assumed adversarial weight fraction over any committee window.
    pub beta: BigRational,
    /// Absolute bound on total slashable loss; `None` means unbounded.
    pub lambda: Option<BigRational>,
    /// Safety decay epsilon.
    pub safety_decay: BigRational,
    /// Proposer boost score p; the boost weight is (p/E) * total.
    pub boost_fraction: BigRational,
    /// Per-checkpoint-interval exit bound chi.
    pub exit_rate: BigRational,
    /// Reward bound rho.
    pub reward_rate: BigRational,
    /// Penalty bound pi.
    pub penalty_rate: BigRational,
    /// Slashing penalty bound sigma.
    pub slash_penalty: BigRational,
    /// Lower-bound factor per epoch distance for the all-history rule;
    /// an empty table means the constant 1.
    pub w_lower: Vec<(i64, BigRational)>,
    /// Look-ahead bound used only by assumption auditors.
    pub max_lookahead: i64,
    /// Whether the proposer boost also counts for the boosted block's
    /// ancestors during the walk.
    pub subtree_boost: bool,
}

impl Default for SafetyParams {
    fn default() -> Self {
        SafetyParams {
            beta: BigRational::zero(),
            lambda: None,
            safety_decay: BigRational::zero(),
            boost_fraction: frac(2, 5), // p = 0.4, so p/E = 1/80 at E = 32
            exit_rate: BigRational::zero(),
            reward_rate: BigRational::zero(),
            penalty_rate: BigRational::zero(),
            slash_penalty: BigRational::zero(),
            w_lower: Vec::new(),
            max_lookahead: 2,
            subtree_boost: false,
        }
    }
}

impl SafetyParams {
    pub fn w_lower_at(&self, epoch_distance: i64) -> BigRational {
        self.w_lower
            .iter()
            .find(|(d, _)| *d == epoch_distance)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(BigRational::one)
    }

    /// beta < (1/4)(1 - p/E): admissibility for the plain LMD rule.
    pub fn lmd_beta_bound(&self, slots_per_epoch: i64) -> BigRational {
        frac(1, 4)
            * (BigRational::one() - &self.boost_fraction / rat_int(slots_per_epoch as u128))
    }

    /// beta < min(1/6, 1/3 - epsilon): admissibility for the HFC and churn
    /// rules' monotonicity guarantee.
    pub fn hfc_beta_bound(&self) -> BigRational {
        frac(1, 6).min(frac(1, 3) - &self.safety_decay)
    }

    /// Rational bracket of (1/8)(5 - sqrt(9 + 16 p/E)), the all-history
    /// rule's bound, tightened to 1e-12.
    pub fn appendix_beta_bound_bracket(
        &self,
        slots_per_epoch: i64,
    ) -> (BigRational, BigRational) {
        let inner =
            rat_int(9) + rat_int(16) * &self.boost_fraction / rat_int(slots_per_epoch as u128);
        let tol = BigRational::new(BigInt::one(), BigInt::from(10u64).pow(12));
        let (slo, shi) = sqrt_bounds(&inner, &tol);
        let lo = frac(1, 8) * (rat_int(5) - shi);
        let hi = frac(1, 8) * (rat_int(5) - slo);
        (lo, hi)
    }

    /// Property checks on the churn rates (slashing dominance, exit cap and
    /// the two combined inequalities).
    pub fn validate_rates(&self, slots_per_epoch: i64) -> Result<(), IndicatorError> {
        let one = BigRational::one();
        if self.slash_penalty < self.penalty_rate {
            return Err(IndicatorError::Inadmissible(
                "slash penalty must be at least the penalty rate".into(),
            ));
        }
        if self.exit_rate >= frac(2, 3) {
            return Err(IndicatorError::Inadmissible("exit rate must be below 2/3".into()));
        }
        if one < &self.penalty_rate + &self.exit_rate * (&one + &self.reward_rate) {
            return Err(IndicatorError::Inadmissible(
                "penalty and exit rates violate 1 >= pi + chi(1+rho)".into(),
            ));
        }
        let lhs = frac(1, 6);
        let rhs = &self.boost_fraction / (rat_int(2) * rat_int(slots_per_epoch as u128))
            + rat_int(2) * &self.exit_rate / (&one - &self.penalty_rate)
            + &self.exit_rate
                * (&self.reward_rate * (&one - &self.exit_rate) - &self.penalty_rate)
                / (&one - &self.penalty_rate);
        if lhs < rhs {
            return Err(IndicatorError::Inadmissible(
                "rates violate 1/6 >= p/2E + 2chi/(1-pi) + chi(rho(1-chi)-pi)/(1-pi)".into(),
            ));
        }
        Ok(())
    }
}

/// (1/(1-beta)) (2/3 + beta): the honest FFG vote mass the monotonicity
/// assumption expects per checkpoint.
pub fn hon_ffg_ratio(beta: &BigRational) -> BigRational {
    (frac(2, 3) + beta) / (BigRational::one() - beta)
}

/// Churn variant: (1/(1-beta)) ((2/3)(1+rho-chi rho)/(1-pi) + chi + beta).
pub fn hon_ffg_ratio_var(
    beta: &BigRational,
    rho: &BigRational,
    pi: &BigRational,
    chi: &BigRational,
) -> BigRational {
    let one = BigRational::one();
    (frac(2, 3) * (&one + rho - chi * rho) / (&one - pi) + chi + beta) / (&one - beta)
}

/// Base safety-condition threshold: 1/2 (1 + W_p / W_window) + beta.
pub fn safe_threshold_base(
    beta: &BigRational,
    boost_weight: &BigRational,
    window_weight: &BigRational,
) -> BigRational {
    frac(1, 2) * (BigRational::one() + boost_weight / window_weight) + beta
}

/// Churn-hardened threshold:
/// (1+rho)/(2(1-pi)) (1 + W_p(1+chi+rho)/W) + chi T / W + beta.
pub fn safe_threshold_full(
    params: &SafetyParams,
    boost_weight: &BigRational,
    window_weight: &BigRational,
    total_weight: &BigRational,
) -> BigRational {
    let one = BigRational::one();
    (&one + &params.reward_rate) / (rat_int(2) * (&one - &params.penalty_rate))
        * (&one
            + boost_weight * (&one + &params.exit_rate + &params.reward_rate) / window_weight)
        + &params.exit_rate * total_weight / window_weight
        + &params.beta
}

/// Base justification threshold: (2/3) T + min(lambda, beta T).
pub fn justification_threshold_base(params: &SafetyParams, total: &BigRational) -> BigRational {
    frac(2, 3) * total + min_lambda_term(params, total)
}

/// Churn-hardened justification threshold:
/// T ((2/3)(1+rho-chi rho)/(1-pi) + chi) + min(lambda, beta T).
pub fn justification_threshold_full(params: &SafetyParams, total: &BigRational) -> BigRational {
    let one = BigRational::one();
    total
        * (frac(2, 3)
            * (&one + &params.reward_rate - &params.exit_rate * &params.reward_rate)
            / (&one - &params.penalty_rate)
            + &params.exit_rate)
        + min_lambda_term(params, total)
}

fn min_lambda_term(params: &SafetyParams, total: &BigRational) -> BigRational {
    let beta_total = &params.beta * total;
    match &params.lambda {
        Some(l) => l.clone().min(beta_total),
        None => beta_total,
    }
}

/// Observed support ratio of `b` over its committee window [ps+1(b), s'],
/// weighed by `eba`. Counts LMD survivors of the view's vote filters.
pub fn q_indicator(
    store: &BlockStore,
    schedule: &CommitteeSchedule,
    view: &View,
    t: Tick,
    b: BlockId,
    s_prime: Slot,
    eba: &Eba,
) -> Result<BigRational, IndicatorError> {
    let votes = filter_chain(store, schedule, view, t);
    let window = schedule.committee_union(
        store.parent_slot_plus_one(b).map_err(|_| IndicatorError::UndefinedIndicator)?,
        s_prime,
    );
    let den = eba.weight(window);
    if den == 0 {
        return Err(IndicatorError::UndefinedIndicator);
    }
    let supporters = crate::fork_choice::ghost_voters(store, votes.iter(), b);
    let num = eba.weight(supporters.intersect(window));
    Ok(BigRational::new(num.into(), den.into()))
}

/// Ground-truth safety indicator: honest support over honest window weight.
/// Only the simulator's monitors can evaluate this.
#[allow(clippy::too_many_arguments)]
pub fn p_indicator_oracle(
    store: &BlockStore,
    schedule: &CommitteeSchedule,
    view: &View,
    t: Tick,
    b: BlockId,
    s_prime: Slot,
    eba: &Eba,
    honest: ValidatorSet,
) -> Result<BigRational, IndicatorError> {
    let votes = filter_chain(store, schedule, view, t);
    let window = schedule
        .committee_union(
            store.parent_slot_plus_one(b).map_err(|_| IndicatorError::UndefinedIndicator)?,
            s_prime,
        )
        .intersect(honest);
    let den = eba.weight(window);
    if den == 0 {
        return Err(IndicatorError::UndefinedIndicator);
    }
    let supporters = crate::fork_choice::ghost_voters(store, votes.iter(), b);
    let num = eba.weight(supporters.intersect(window));
    Ok(BigRational::new(num.into(), den.into()))
}

/// Per-slot winner cache backing `highestConfirmedSinceEpoch`: at each slot
/// start the no-caching check runs once, and the confirmed frontier is the
/// best winner over the current and previous epoch.
#[derive(Debug, Clone, Default)]
pub struct ConfirmationCache {
    winners: BTreeMap<Slot, BlockId>,
}

impl ConfirmationCache {
    pub fn record(&mut self, slot: Slot, winner: Option<BlockId>) {
        if let Some(w) = winner {
            self.winners.insert(slot, w);
        }
    }

    /// Max-slot winner recorded in [firstSlot(e)+1, slot(t)].
    pub fn frontier(&self, store: &BlockStore, e: Epoch, t: Tick) -> Option<BlockId> {
        let cfg = store.cfg();
        let lo = cfg.first_slot(e) + 1;
        let hi = cfg.slot_of(t);
        self.winners.range(lo..=hi).map(|(_, &b)| b).max_by_key(|&b| store.order_key(b))
    }
}

/// One observer's per-slot-start rule evaluation over its current canonical
/// chain. Shares the filtered vote set, per-ancestor supporter and committee
/// window masks, and per-checkpoint pass vectors across all rules.
pub struct Evaluator<'a> {
    store: &'a BlockStore,
    schedule: &'a CommitteeSchedule,
    view: &'a View,
    params: &'a SafetyParams,
    slot: Slot,
    epoch: Epoch,
    gj: Checkpoint,
    gf: Checkpoint,
    snapshot_tick: Tick,
    chain: Vec<BlockId>,
    chain_index: BTreeMap<BlockId, usize>,
    supporters: Vec<ValidatorSet>,
    windows: Vec<ValidatorSet>,
    safe_cache: RefCell<BTreeMap<(Checkpoint, bool), Vec<bool>>>,
    willchkp_cache: RefCell<BTreeMap<(Checkpoint, Checkpoint, bool), bool>>,
}

impl<'a> Evaluator<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &'a BlockStore,
        schedule: &'a CommitteeSchedule,
        view: &'a View,
        params: &'a SafetyParams,
        t: Tick,
        head: BlockId,
        gj: Checkpoint,
        gf: Checkpoint,
    ) -> Self {
        let cfg = store.cfg();
        let slot = cfg.slot_of(t);
        let epoch = cfg.epoch_of_tick(t);
        let snapshot_tick = cfg.slot_start(slot - 1);
        let chain = store.chain(head).expect("head chain in store");
        let chain_index: BTreeMap<BlockId, usize> =
            chain.iter().enumerate().map(|(i, &b)| (b, i)).collect();

        // Deepest supported chain index per vote, then prefix-union so that
        // supporters[i] is the LMD support set of chain[i].
        let votes = filter_chain(store, schedule, view, t);
        let mut marks: Vec<ValidatorSet> = vec![ValidatorSet::EMPTY; chain.len()];
        for vote in &votes {
            let mut cur = vote.block;
            loop {
                if let Some(&i) = chain_index.get(&cur) {
                    marks[i].insert(vote.signer);
                    break;
                }
                match store.parent(cur) {
                    Ok(Some(p)) => cur = p,
                    _ => break,
                }
            }
        }
        let mut supporters = marks;
        for i in 1..supporters.len() {
            supporters[i] = supporters[i].union(supporters[i - 1]);
        }

        // Committee windows [ps+1(chain[i]), slot-1], grown incrementally
        // as the walk descends the chain.
        let mut windows: Vec<ValidatorSet> = vec![ValidatorSet::EMPTY; chain.len()];
        let mut acc = ValidatorSet::EMPTY;
        let mut covered_from = slot; // committees [covered_from, slot-1] are in acc
        for i in 0..chain.len() {
            let from = if i + 1 < chain.len() {
                store.slot(chain[i + 1]).map(|s| s + 1).unwrap_or(1)
            } else {
                1 // genesis index: value unused
            };
            let mut s = covered_from - 1;
            while s >= from {
                acc = acc.union(schedule.committee(s));
                s -= 1;
            }
            covered_from = covered_from.min(from);
            windows[i] = acc;
        }

        Evaluator {
            store,
            schedule,
            view,
            params,
            slot,
            epoch,
            gj,
            gf,
            snapshot_tick,
            chain,
            chain_index,
            supporters,
            windows,
            safe_cache: RefCell::new(BTreeMap::new()),
            willchkp_cache: RefCell::new(BTreeMap::new()),
        }
    }

    pub fn head(&self) -> BlockId {
        self.chain[0]
    }

    pub fn gj(&self) -> Checkpoint {
        self.gj
    }

    pub fn gf(&self) -> Checkpoint {
        self.gf
    }

    pub fn chain(&self) -> &[BlockId] {
        &self.chain
    }

    /// Per-ancestor Q-vs-threshold outcomes for the whole chain under
    /// checkpoint `cp`; the genesis entry (last index) is vacuously true.
    fn per_block_ok(&self, cp: Checkpoint, full: bool) -> Vec<bool> {
        if let Some(v) = self.safe_cache.borrow().get(&(cp, full)) {
            return v.clone();
        }
        let n = self.chain.len();
        let mut ok = vec![true; n];
        match self.store.eba(cp.block) {
            Ok(eba) => {
                let total = rat_int(eba.total_weight());
                let boost_weight = &self.params.boost_fraction
                    / rat_int(self.store.cfg().slots_per_epoch as u128)
                    * &total;
                for (i, ok_i) in ok.iter_mut().enumerate().take(n.saturating_sub(1)) {
                    let den = eba.weight(self.windows[i]);
                    if den == 0 {
                        *ok_i = false;
                        continue;
                    }
                    let num = eba.weight(self.supporters[i].intersect(self.windows[i]));
                    let q = BigRational::new(num.into(), den.into());
                    let den_r = rat_int(den);
                    let threshold = if full {
                        safe_threshold_full(self.params, &boost_weight, &den_r, &total)
                    } else {
                        safe_threshold_base(&self.params.beta, &boost_weight, &den_r)
                    };
                    *ok_i = q > threshold;
                }
            }
            Err(_) => {
                for v in ok.iter_mut().take(n.saturating_sub(1)) {
                    *v = false;
                }
            }
        }
        self.safe_cache.borrow_mut().insert((cp, full), ok.clone());
        ok
    }

    fn all_ok_from(&self, cp: Checkpoint, full: bool) -> Vec<bool> {
        let ok = self.per_block_ok(cp, full);
        let n = ok.len();
        let mut suffix = vec![true; n];
        for i in (0..n.saturating_sub(1)).rev() {
            suffix[i] = ok[i] && suffix[i + 1];
        }
        suffix
    }

    /// The safety condition for a block on the observer's canonical chain:
    /// every non-genesis ancestor clears its Q threshold under `cp`.
    pub fn is_lmd_ghost_safe(&self, b: BlockId, cp: Checkpoint, full: bool) -> Option<bool> {
        let &i = self.chain_index.get(&b)?;
        Some(self.all_ok_from(cp, full)[i])
    }

    /// Single-block outcome (only this block's own window), used by the
    /// monitors' raw-condition samples.
    pub fn raw_block_ok(&self, b: BlockId, cp: Checkpoint) -> Option<bool> {
        let &i = self.chain_index.get(&b)?;
        Some(self.per_block_ok(cp, false)[i])
    }

    /// Received-plus-projected vote mass for C(b, e) against the rule's
    /// justification threshold.
    pub fn will_chkp_be_justified(&self, b: BlockId, e: Epoch, full: bool) -> bool {
        let cp = match self.store.checkpoint_of(b, e) {
            Ok(c) => c,
            Err(_) => return false,
        };
        // The source the epoch's voters actually used: the voting source at
        // the block's own epoch, GJ(b). Once epoch(t) moves past epoch(b),
        // votingSource(b, t) would already realize the target itself.
        let vs = match self.store.runtime(b) {
            Ok(rt) => rt.meta.gj,
            Err(_) => return false,
        };
        if let Some(&hit) = self.willchkp_cache.borrow().get(&(vs, cp, full)) {
            return hit;
        }
        let result = self.will_chkp_inner(vs, cp, e, full);
        self.willchkp_cache.borrow_mut().insert((vs, cp, full), result);
        result
    }

    fn will_chkp_inner(&self, vs: Checkpoint, cp: Checkpoint, e: Epoch, full: bool) -> bool {
        let cfg = self.store.cfg();
        let eba = match self.store.eba(cp.block) {
            Ok(e) => e,
            Err(_) => return false,
        };
        let total = rat_int(eba.total_weight());
        let received_committee = self.schedule.committee_union(cfg.first_slot(e), self.slot - 1);
        let signers = self.view.ffg_link_signers(vs, cp).intersect(received_committee);
        let received = rat_int(eba.weight(signers));
        let future =
            rat_int(eba.weight(self.schedule.committee_union(self.slot, cfg.last_slot(e))));
        let lhs = received + (BigRational::one() - &self.params.beta) * future;
        let rhs = if full {
            justification_threshold_full(self.params, &total)
        } else {
            justification_threshold_base(self.params, &total)
        };
        lhs >= rhs
    }

    /// Blocks in the previous-slot snapshot usable as the existential
    /// witness of the previous-epoch branch, with their voting sources.
    fn snapshot_witnesses(&self) -> Vec<(BlockId, Checkpoint)> {
        let mut out = Vec::new();
        for b in self.view.blocks_at(self.snapshot_tick) {
            let be = match self.store.epoch(b) {
                Ok(e) => e,
                Err(_) => continue,
            };
            if be >= self.epoch {
                continue;
            }
            if let Ok(vs) = voting_source(self.store, b, self.epoch) {
                if vs.epoch >= self.epoch - 2 {
                    out.push((b, vs));
                }
            }
        }
        out.sort_by_key(|(b, _)| std::cmp::Reverse(self.store.order_key(*b)));
        out
    }

    fn no_caching_hfc(&self, b: BlockId, full: bool) -> bool {
        let cfg = self.store.cfg();
        let be = match self.store.epoch(b) {
            Ok(e) => e,
            Err(_) => return false,
        };
        if be == self.epoch {
            let gj_b = match self.store.runtime(b) {
                Ok(rt) => rt.meta.gj,
                Err(_) => return false,
            };
            // epoch(GJ(b)) can never exceed epoch(t)-1, so >= equals the
            // strict equality everywhere except the genesis epoch, which has
            // no earlier checkpoint to demand.
            self.will_chkp_be_justified(b, self.epoch, full)
                && gj_b.epoch >= self.epoch - 1
                && self.is_lmd_ghost_safe(b, gj_b, full).unwrap_or(false)
        } else {
            if self.slot != cfg.first_slot(self.epoch) {
                return false;
            }
            if !self.will_chkp_be_justified(b, self.epoch - 1, full) {
                return false;
            }
            for (witness, vs) in self.snapshot_witnesses() {
                if self.store.is_ancestor(b, witness).unwrap_or(false)
                    && self.is_lmd_ghost_safe(b, vs, full).unwrap_or(false)
                {
                    return true;
                }
            }
            false
        }
    }

    fn no_caching_appendix(&self, b: BlockId) -> bool {
        let cfg = self.store.cfg();
        let be = match self.store.epoch(b) {
            Ok(e) => e,
            Err(_) => return false,
        };
        if be == self.epoch {
            return self.no_caching_hfc(b, false);
        }
        let cb = match self.store.latest_checkpoint(b) {
            Ok(c) => c,
            Err(_) => return false,
        };
        if !self.is_lmd_ghost_safe(b, cb, false).unwrap_or(false) {
            return false;
        }
        // a snapshot block from an earlier epoch whose chain justifies C(b)
        let mut witnessed = false;
        for w in self.view.blocks_at(self.snapshot_tick) {
            if self.store.epoch(w).map(|e| e < self.epoch).unwrap_or(false)
                && self.store.is_ancestor(b, w).unwrap_or(false)
                && self
                    .store
                    .runtime(w)
                    .map(|rt| rt.meta.unrealized_justified.contains(&cb))
                    .unwrap_or(false)
            {
                witnessed = true;
                break;
            }
        }
        if !witnessed {
            return false;
        }
        if !self.store.is_ancestor(self.gf.block, b).unwrap_or(false) {
            return false;
        }
        // per-epoch FFG mass toward descendants of b, weighed under the
        // greatest finalized checkpoint
        let eba = match self.store.eba(self.gf.block) {
            Ok(e) => e,
            Err(_) => return false,
        };
        let total = rat_int(eba.total_weight());
        for e in (cb.epoch + 1)..=self.epoch {
            let mut signers = ValidatorSet::EMPTY;
            for vote in self.view.ffg_votes() {
                if vote.target.epoch == e
                    && self.store.is_ancestor(b, vote.target.block).unwrap_or(false)
                {
                    signers.insert(vote.signer);
                }
            }
            let committee = self.schedule.committee_union(cfg.first_slot(e), self.slot - 1);
            let received = rat_int(eba.weight(signers.intersect(committee)));
            let future =
                rat_int(eba.weight(self.schedule.committee_union(self.slot, cfg.last_slot(e))));
            let lhs = received + (BigRational::one() - &self.params.beta) * future;
            let rhs = frac(2, 3) * self.params.w_lower_at(e - self.gf.epoch) * &total;
            if lhs < rhs {
                return false;
            }
        }
        true
    }

    /// Per-slot no-caching decision for one block under one rule.
    pub fn no_caching(&self, rule: ConfirmationRule, b: BlockId) -> bool {
        match rule {
            ConfirmationRule::Lmd => self.is_lmd_ghost_safe(b, self.gj, false).unwrap_or(false),
            ConfirmationRule::Hfc => self.no_caching_hfc(b, false),
            ConfirmationRule::Churn => self.no_caching_hfc(b, true),
            ConfirmationRule::Appendix => self.no_caching_appendix(b),
        }
    }

    /// Highest block on the canonical chain passing the rule's no-caching
    /// check at this slot start (genesis passes every rule vacuously).
    pub fn slot_winner(&self, rule: ConfirmationRule) -> BlockId {
        let genesis = *self.chain.last().expect("chain has genesis");
        match rule {
            ConfirmationRule::Lmd => {
                let suffix = self.all_ok_from(self.gj, false);
                let m =
                    (0..self.chain.len()).find(|&i| suffix[i]).unwrap_or(self.chain.len() - 1);
                self.chain[m]
            }
            _ => {
                for &b in &self.chain {
                    if b == genesis {
                        break;
                    }
                    if self.no_caching(rule, b) {
                        return b;
                    }
                }
                genesis
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{BlockDraft, ChainConfig, ChurnSchedule, ValidatorId};
    use crate::ffg::{gf_view, gj_view, FfgVote};
    use crate::fork_choice::GhostVote;
    use std::collections::BTreeMap as Map;

    #[test]
    fn hon_ffg_ratio_boundaries() {
        assert_eq!(hon_ffg_ratio(&BigRational::zero()), frac(2, 3));
        assert_eq!(hon_ffg_ratio(&frac(1, 6)), BigRational::one());
        for beta in [frac(0, 1), frac(1, 10), frac(1, 7)] {
            assert_eq!(
                hon_ffg_ratio_var(
                    &beta,
                    &BigRational::zero(),
                    &BigRational::zero(),
                    &BigRational::zero()
                ),
                hon_ffg_ratio(&beta)
            );
        }
    }

    #[test]
    fn threshold_collapse_at_zero_rates() {
        let params = SafetyParams { beta: frac(1, 10), ..SafetyParams::default() };
        let wp = frac(3, 2);
        let w = rat_int(40);
        let total = rat_int(64);
        assert_eq!(
            safe_threshold_full(&params, &wp, &w, &total),
            safe_threshold_base(&params.beta, &wp, &w)
        );
        assert_eq!(
            justification_threshold_full(&params, &total),
            justification_threshold_base(&params, &total)
        );
    }

    #[test]
    fn full_threshold_worked_example() {
        // rho = pi = chi = 1/100, beta = 0, window = total, W_p = total/80:
        // (101/198)(1 + (1/80)(102/100)) + 1/100 = 417071/792000
        let params = SafetyParams {
            reward_rate: frac(1, 100),
            penalty_rate: frac(1, 100),
            exit_rate: frac(1, 100),
            ..SafetyParams::default()
        };
        let total = rat_int(8000);
        let wp = &total / rat_int(80);
        let got = safe_threshold_full(&params, &wp, &total, &total);
        assert_eq!(got, BigRational::new(BigInt::from(417071), BigInt::from(792000)));
    }

    #[test]
    fn lambda_handling() {
        let mut params = SafetyParams { beta: frac(1, 5), ..SafetyParams::default() };
        let total = rat_int(100);
        assert_eq!(
            justification_threshold_base(&params, &total),
            frac(2, 3) * &total + rat_int(20)
        );
        params.lambda = Some(BigRational::zero());
        assert_eq!(justification_threshold_base(&params, &total), frac(2, 3) * &total);
    }

    #[test]
    fn admissibility_bounds() {
        let mut params = SafetyParams::default();
        // p/E = 1/80 at E = 32 (p = 2/5): bound is 79/320
        assert_eq!(params.lmd_beta_bound(32), frac(79, 320));
        assert_eq!(params.hfc_beta_bound(), frac(1, 6));
        params.safety_decay = frac(1, 4);
        assert_eq!(params.hfc_beta_bound(), frac(1, 12));
        let (lo, hi) = SafetyParams::default().appendix_beta_bound_bracket(32);
        assert!(lo < hi);
        // (1/8)(5 - sqrt(9.2)) is about 0.24586
        assert!(lo > frac(2458, 10000) && hi < frac(2459, 10000));
    }

    #[test]
    fn rate_validation() {
        let mut params = SafetyParams {
            exit_rate: frac(1, 100),
            reward_rate: frac(1, 100),
            penalty_rate: frac(1, 100),
            slash_penalty: frac(1, 100),
            ..SafetyParams::default()
        };
        assert!(params.validate_rates(32).is_ok());
        params.exit_rate = frac(2, 3);
        assert!(params.validate_rates(32).is_err());
        params.exit_rate = frac(1, 100);
        params.penalty_rate = frac(2, 100);
        assert!(params.validate_rates(32).is_err()); // sigma < pi
    }

    // --- indicator tests over a small constructed view ---

    fn cfg4() -> ChainConfig {
        ChainConfig { slots_per_epoch: 4, ticks_per_slot: 12, vote_offset_ticks: 4 }
    }

    /// 8 validators, committees of two per slot: slot s hosts validators
    /// {2(s mod 4), 2(s mod 4)+1}.
    fn schedule8(n_epochs: usize) -> CommitteeSchedule {
        let mut committees = Vec::new();
        for _ in 0..n_epochs {
            committees.push(
                (0..4u32)
                    .map(|k| vec![ValidatorId(2 * k), ValidatorId(2 * k + 1)])
                    .collect::<Vec<_>>(),
            );
        }
        let mut proposers = Map::new();
        for s in 0..(n_epochs as i64 * 4) {
            proposers.insert(s, ValidatorId((2 * (s % 4)) as u32));
        }
        CommitteeSchedule::pinned(cfg4(), committees, proposers).unwrap()
    }

    struct Fixture {
        store: BlockStore,
        schedule: CommitteeSchedule,
        view: View,
        b: BlockId,
    }

    /// One block at slot 1 plus a conflicting sibling; votes choose a side.
    fn fixture(votes: &[(u32, Slot, bool)]) -> Fixture {
        let mut store = BlockStore::new(
            cfg4(),
            Eba::uniform(8, 1),
            ChurnSchedule::new(),
            BigRational::zero(),
        );
        let schedule = schedule8(4);
        let g = store.genesis();
        let b = store
            .insert(BlockDraft {
                slot: 1,
                proposer: Some(ValidatorId(2)),
                parent: Some(g),
                ffg_votes: Vec::<FfgVote>::new(),
                slashing_evidence: vec![],
                payload: 0,
            })
            .unwrap();
        let sibling = store
            .insert(BlockDraft {
                slot: 2,
                proposer: Some(ValidatorId(4)),
                parent: Some(g),
                ffg_votes: vec![],
                slashing_evidence: vec![],
                payload: 1,
            })
            .unwrap();
        let mut view = View::genesis(&store);
        view.add_block(&store, &schedule, b, 12);
        view.add_block(&store, &schedule, sibling, 24);
        for &(signer, slot, support) in votes {
            let block = if support { b } else { sibling };
            view.add_ghost_vote(GhostVote { signer: ValidatorId(signer), slot, block });
        }
        Fixture { store, schedule, view, b }
    }

    #[test]
    fn q_indicator_counts_support() {
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (7, 3, true),
            (0, 4, true),
            (1, 4, true),
        ];
        let f = fixture(&votes);
        let t = f.store.cfg().slot_start(5);
        let eba = f.store.eba(f.store.genesis()).unwrap().clone();
        let q = q_indicator(&f.store, &f.schedule, &f.view, t, f.b, 4, &eba).unwrap();
        assert_eq!(q, BigRational::one());

        // 6 of 8 support
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (7, 3, true),
            (0, 4, false),
            (1, 4, false),
        ];
        let f = fixture(&votes);
        let q = q_indicator(&f.store, &f.schedule, &f.view, t, f.b, 4, &eba).unwrap();
        assert_eq!(q, frac(3, 4));

        // empty window is undefined
        let err = q_indicator(&f.store, &f.schedule, &f.view, t, f.b, 0, &eba);
        assert_eq!(err, Err(IndicatorError::UndefinedIndicator));
    }

    #[test]
    fn q_indicator_excludes_equivocators() {
        // 6 support but two of them equivocate: 4/8 remain
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (7, 3, true),
        ];
        let mut f = fixture(&votes);
        let other = f
            .store
            .insert(BlockDraft {
                slot: 1,
                proposer: Some(ValidatorId(2)),
                parent: Some(f.store.genesis()),
                ffg_votes: vec![],
                slashing_evidence: vec![],
                payload: 9,
            })
            .unwrap();
        f.view.add_block(&f.store, &f.schedule, other, 13);
        f.view.add_ghost_vote(GhostVote { signer: ValidatorId(2), slot: 1, block: other });
        f.view.add_ghost_vote(GhostVote { signer: ValidatorId(3), slot: 1, block: other });
        let t = f.store.cfg().slot_start(5);
        let eba = f.store.eba(f.store.genesis()).unwrap().clone();
        let q = q_indicator(&f.store, &f.schedule, &f.view, t, f.b, 4, &eba).unwrap();
        assert_eq!(q, frac(1, 2));
    }

    #[test]
    fn p_indicator_is_honest_restricted() {
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (0, 4, false),
        ];
        let f = fixture(&votes);
        let t = f.store.cfg().slot_start(5);
        let eba = f.store.eba(f.store.genesis()).unwrap().clone();
        // honest = everyone but v0 and v1: honest window weight 6, support 5
        let honest = ValidatorSet::from_ids((2..8).map(ValidatorId));
        let p =
            p_indicator_oracle(&f.store, &f.schedule, &f.view, t, f.b, 4, &eba, honest).unwrap();
        assert_eq!(p, frac(5, 6));
        // every honest member of a window supporting: ratio 1
        let honest = ValidatorSet::from_ids([ValidatorId(4), ValidatorId(5)]);
        let p =
            p_indicator_oracle(&f.store, &f.schedule, &f.view, t, f.b, 4, &eba, honest).unwrap();
        assert_eq!(p, BigRational::one());
    }

    #[test]
    fn will_chkp_counts_received_plus_projection() {
        // 8 validators of weight 1, E = 4. At the start of slot 6 the
        // committees of slots 4-5 have voted the epoch-1 link; slots 6-7 are
        // projected at (1 - beta).
        let f = fixture(&[]);
        let gcp = f.store.genesis_checkpoint();
        let mut view = f.view.clone();
        let chain_tip = f.b; // slot-1 block on the canonical chain
        let c1 = f.store.checkpoint_of(chain_tip, 1).unwrap();
        for signer in [2u32, 3, 4, 5] {
            view.add_ffg_vote(FfgVote {
                signer: ValidatorId(signer),
                source: gcp,
                target: c1,
                cast_at: 4,
            });
        }
        let t = f.store.cfg().slot_start(6);
        let params = SafetyParams::default();
        let gj = gj_view(&f.store, view.block_ids(), t);
        let gf = gf_view(&f.store, view.block_ids(), t);
        let ev = Evaluator::new(&f.store, &f.schedule, &view, &params, t, chain_tip, gj, gf);
        // wrong committee members do not count: only signers in committees
        // [4, 5] = {0,1,2,3} do, so received = 2 (signers 2 and 3),
        // projection covers slots 6-7 = weight 4: 2 + 4 >= 16/3
        assert!(ev.will_chkp_be_justified(chain_tip, 1, false));
        // with beta = 1/2 the projection halves and a lambda-free min term
        // adds beta * total: 2 + 2 < 16/3 + 4
        let tight = SafetyParams { beta: frac(1, 2), ..SafetyParams::default() };
        let ev2 = Evaluator::new(&f.store, &f.schedule, &view, &tight, t, chain_tip, gj, gf);
        assert!(!ev2.will_chkp_be_justified(chain_tip, 1, false));
        // once the epoch has fully elapsed the projection term vanishes:
        // 2 received < 16/3
        let t_late = f.store.cfg().slot_start(9);
        let ev3 =
            Evaluator::new(&f.store, &f.schedule, &view, &params, t_late, chain_tip, gj, gf);
        assert!(!ev3.will_chkp_be_justified(chain_tip, 1, false));
    }

    #[test]
    fn previous_epoch_branch_gated_to_first_slot() {
        // a block from an earlier epoch can only pass the no-caching check
        // at the first slot of an epoch
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (7, 3, true),
            (0, 4, true),
            (1, 4, true),
        ];
        let f = fixture(&votes);
        let params = SafetyParams::default();
        // slot 5 is not the first slot of epoch 1
        let t = f.store.cfg().slot_start(5);
        let gj = gj_view(&f.store, f.view.block_ids(), t);
        let gf = gf_view(&f.store, f.view.block_ids(), t);
        let ev = Evaluator::new(&f.store, &f.schedule, &f.view, &params, t, f.b, gj, gf);
        assert!(!ev.no_caching(ConfirmationRule::Hfc, f.b));
        assert!(!ev.no_caching(ConfirmationRule::Churn, f.b));
    }

    #[test]
    fn evaluator_safety_condition() {
        // 6 of 8 support, beta = 0, p/E = 1/80: Q = 3/4 > (1/2)(1 + 1/80)
        let votes: Vec<(u32, Slot, bool)> = vec![
            (2, 1, true),
            (3, 1, true),
            (4, 2, true),
            (5, 2, true),
            (6, 3, true),
            (7, 3, true),
            (0, 4, false),
            (1, 4, false),
        ];
        let f = fixture(&votes);
        let t = f.store.cfg().slot_start(5);
        let params = SafetyParams {
            boost_fraction: frac(1, 20), // p/E = 1/80 at E = 4
            ..SafetyParams::default()
        };
        let gj = gj_view(&f.store, f.view.block_ids(), t);
        let gf = gf_view(&f.store, f.view.block_ids(), t);
        let ev = Evaluator::new(&f.store, &f.schedule, &f.view, &params, t, f.b, gj, gf);
        assert_eq!(ev.is_lmd_ghost_safe(f.b, gj, false), Some(true));
        // genesis alone is vacuously safe
        let g = f.store.genesis();
        assert_eq!(ev.is_lmd_ghost_safe(g, gj, false), Some(true));
        assert_eq!(ev.slot_winner(ConfirmationRule::Lmd), f.b);
        // with beta = 1/4 the same support fails
        let tight = SafetyParams { beta: frac(1, 4), ..params.clone() };
        let ev2 = Evaluator::new(&f.store, &f.schedule, &f.view, &tight, t, f.b, gj, gf);
        assert_eq!(ev2.is_lmd_ghost_safe(f.b, gj, false), Some(false));
        assert_eq!(ev2.slot_winner(ConfirmationRule::Lmd), g);
    }
}
