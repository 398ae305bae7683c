//! Total-ordered event log of a run. One JSON object per line, stable field
//! names and ordering; a trace plus the echoed config is enough to re-run
//! every monitor offline.

use serde::{Deserialize, Serialize};

use crate::chain::{BlockId, Checkpoint, Epoch, Slot, Tick, ValidatorId};
use crate::confirmation::ConfirmationRule;
use crate::ffg::FfgVote;
use crate::fork_choice::GhostVote;

/// Reference to a network message by content.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "snake_case")]
pub enum MsgRef {
    Block { id: BlockId },
    Ghost { vote: GhostVote },
    Ffg { vote: FfgVote },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventPayload {
    /// A block came into existence (sender-side).
    Block {
        id: BlockId,
        slot: Slot,
        proposer: Option<ValidatorId>,
        parent: Option<BlockId>,
        ffg_votes: Vec<FfgVote>,
        slashings: Vec<ValidatorId>,
        payload: u64,
    },
    GhostVoteSent { vote: GhostVote },
    FfgVoteSent { vote: FfgVote },
    Deliver { to: ValidatorId, #[serde(flatten)] msg: MsgRef },
    SlotStart { slot: Slot },
    VoteDeadline { slot: Slot },
    /// An honest validator's fork-choice output, sampled at slot starts and
    /// vote deadlines.
    Head { validator: ValidatorId, head: BlockId },
    /// Observer-side justified/finalized checkpoints at a slot start.
    ObserverState { observer: ValidatorId, head: BlockId, gj: Checkpoint, gf: Checkpoint },
    /// The confirmed frontier of one rule for one observer at a slot start.
    Frontier { observer: ValidatorId, rule: ConfirmationRule, frontier: BlockId },
    /// Uncached safety-condition outcome for a single block (its own window
    /// only), logged when raw sampling is enabled.
    RawSafe { observer: ValidatorId, block: BlockId, pass: bool },
    /// Exact indicator values for offline spot checks (rationals as "n/d").
    QpSample { observer: ValidatorId, block: BlockId, q: String, p: String },
    /// Slashing evidence included on chain, with the applied penalty.
    SlashIncluded { block: BlockId, validator: ValidatorId, cut: u64 },
    AdversaryAction { actor: ValidatorId, action: String },
    /// Divergent GJ-derived total weights across two observers at a sample
    /// point (the weight precondition the gj-weight replay violates).
    GjWeightDivergence {
        observer_low: ValidatorId,
        observer_high: ValidatorId,
        total_low: u64,
        total_high: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub tick: Tick,
    #[serde(flatten)]
    pub ev: EventPayload,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    /// Echo of the scenario config the run was produced from.
    pub config: serde_json::Value,
    /// Derived epoch-aligned stabilization time, for monitor gating.
    pub ggst: Tick,
    pub horizon_slots: Slot,
    pub events: Vec<TraceEvent>,
}

impl SimulationTrace {
    /// One JSON object per line: a header line, then every event in order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "kind": "header",
            "config": self.config,
            "ggst": self.ggst,
            "horizon_slots": self.horizon_slots,
        });
        out.push_str(&serde_json::to_string(&header).expect("serialize header"));
        out.push('\n');
        for ev in &self.events {
            out.push_str(&serde_json::to_string(ev).expect("serialize event"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(s: &str) -> Result<Self, String> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header: serde_json::Value = serde_json::from_str(
            lines.next().ok_or_else(|| "empty trace".to_string())?,
        )
        .map_err(|e| e.to_string())?;
        if header.get("kind").and_then(|k| k.as_str()) != Some("header") {
            return Err("first trace line must be the header".into());
        }
        let config = header.get("config").cloned().ok_or("header missing config")?;
        let ggst = header.get("ggst").and_then(|v| v.as_i64()).ok_or("header missing ggst")?;
        let horizon_slots = header
            .get("horizon_slots")
            .and_then(|v| v.as_i64())
            .ok_or("header missing horizon_slots")?;
        let mut events = Vec::new();
        for line in lines {
            events.push(serde_json::from_str(line).map_err(|e| e.to_string())?);
        }
        Ok(SimulationTrace { config, ggst, horizon_slots, events })
    }

    pub fn slot_start_ticks(&self) -> Vec<(Tick, Slot)> {
        self.events
            .iter()
            .filter_map(|e| match e.ev {
                EventPayload::SlotStart { slot } => Some((e.tick, slot)),
                _ => None,
            })
            .collect()
    }

    pub fn epoch_of(&self, cfg: &crate::chain::ChainConfig, t: Tick) -> Epoch {
        cfg.epoch_of_tick(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let trace = SimulationTrace {
            config: serde_json::json!({"name": "t", "seed": 1}),
            ggst: 48,
            horizon_slots: 8,
            events: vec![
                TraceEvent { tick: 0, ev: EventPayload::SlotStart { slot: 0 } },
                TraceEvent {
                    tick: 4,
                    ev: EventPayload::Head { validator: ValidatorId(1), head: BlockId([7; 32]) },
                },
                TraceEvent {
                    tick: 5,
                    ev: EventPayload::Deliver {
                        to: ValidatorId(2),
                        msg: MsgRef::Ghost {
                            vote: GhostVote {
                                signer: ValidatorId(0),
                                slot: 0,
                                block: BlockId([7; 32]),
                            },
                        },
                    },
                },
            ],
        };
        let jsonl = trace.to_jsonl();
        let back = SimulationTrace::from_jsonl(&jsonl).unwrap();
        assert_eq!(back, trace);
        assert_eq!(back.to_jsonl(), jsonl);
        assert_eq!(jsonl.lines().count(), 4);
    }
}
