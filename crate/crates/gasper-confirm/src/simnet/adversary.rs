//! Adversary strategies. The adversary controls exactly the configured
//! Byzantine set: it may time its own messages freely within the legal
//! delivery window, choose pre-GST network delays, and vote arbitrarily,
//! but it can never forge honest signatures.


use serde::{Deserialize, Serialize};

use crate::chain::{Slot, Tick};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AdversaryStrategy {
    /// Byzantine validators do nothing at all.
    #[default]
    Silent,
    /// Cast two GHOST votes (head and its parent) in the given committee
    /// slots, or in every assigned slot when none are listed.
    Equivocate {
        #[serde(default)]
        slots: Option<Vec<Slot>>,
    },
    /// Build a private chain on top of the public head at adversarial
    /// proposer slots and release everything at a chosen slot.
    WithholdRelease { release_slot: Slot },
    /// Maintain a public fork and aim FFG votes at its checkpoints.
    ConflictingFfg,
    /// Fully scripted behaviour for counterexample replays.
    Scripted(ScriptedPlan),
}

/// A deterministic script: partition delays before GST, pinned delays after,
/// plus explicit vote defections, equivocations, FFG withholding and
/// withheld proposals with staggered releases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ScriptedPlan {
    /// (validator, partition group) pairs; unlisted validators are group 0.
    /// A list rather than a map: integer map keys do not survive the
    /// tagged-enum serde round trip.
    pub groups: Vec<(u32, u8)>,
    /// Delay for same-group messages before GST (cross-group messages are
    /// held to the legal cap max(t, GST) + delta).
    pub pre_gst_same_group_delay: i64,
    /// Fixed delay for every message after GST (capped at delta).
    pub post_gst_delay: i64,
    /// At (slot, voter): GHOST-vote for the newest block proposed by the
    /// given group instead of the honest head.
    pub defect_votes: Vec<DefectVote>,
    /// At (slot, voter): vote for the head and again for its parent.
    pub equivocate_at: Vec<(Slot, u32)>,
    /// Adversarial FFG votes cast during these epochs are delivered only to
    /// the adversary itself (available for later inclusion).
    pub withhold_ffg_epochs: Vec<i64>,
    /// Blocks built at their proposer slot but released later.
    pub withheld_proposals: Vec<WithheldProposal>,
}

impl ScriptedPlan {
    pub fn group_of(&self, v: u32) -> u8 {
        self.groups.iter().find(|(id, _)| *id == v).map(|(_, g)| *g).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectVote {
    pub slot: Slot,
    pub voter: u32,
    pub target_group: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithheldProposal {
    pub slot: Slot,
    pub release_tick: Tick,
    /// Recipients that get the block at the release tick itself; everyone
    /// else gets it `late_delay` ticks later (within the legal window).
    pub early_recipients: Vec<u32>,
    pub late_delay: i64,
}
