use serde::{Deserialize, Serialize};

/// Discrete simulation time. One tick is one second at the default cadence.
pub type Tick = i64;
/// Slot index, genesis occupies slot 0.
pub type Slot = i64;
/// Epoch index. Signed so that expressions like `epoch(t) - 2` stay well
/// defined near genesis.
pub type Epoch = i64;

/// Static time parameters of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Slots per epoch (E), at least 2.
    pub slots_per_epoch: i64,
    /// Ticks in one slot.
    pub ticks_per_slot: i64,
    /// Offset within a slot at which committee members vote.
    pub vote_offset_ticks: i64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.slots_per_epoch < 2 {
            return Err(format!("slots_per_epoch must be >= 2, got {}", self.slots_per_epoch));
        }
        if self.ticks_per_slot <= 0 {
            return Err("ticks_per_slot must be positive".into());
        }
        if !(0 < self.vote_offset_ticks && self.vote_offset_ticks < self.ticks_per_slot) {
            return Err(format!(
                "vote_offset_ticks must satisfy 0 < {} < {}",
                self.vote_offset_ticks, self.ticks_per_slot
            ));
        }
        Ok(())
    }

    pub fn slot_of(&self, t: Tick) -> Slot {
        t.div_euclid(self.ticks_per_slot)
    }

    pub fn slot_start(&self, s: Slot) -> Tick {
        s * self.ticks_per_slot
    }

    pub fn vote_deadline(&self, s: Slot) -> Tick {
        self.slot_start(s) + self.vote_offset_ticks
    }

    pub fn epoch_of_slot(&self, s: Slot) -> Epoch {
        s.div_euclid(self.slots_per_epoch)
    }

    pub fn epoch_of_tick(&self, t: Tick) -> Epoch {
        self.epoch_of_slot(self.slot_of(t))
    }

    pub fn first_slot(&self, e: Epoch) -> Slot {
        e * self.slots_per_epoch
    }

    pub fn last_slot(&self, e: Epoch) -> Slot {
        (e + 1) * self.slots_per_epoch - 1
    }

    pub fn epoch_start(&self, e: Epoch) -> Tick {
        self.slot_start(self.first_slot(e))
    }

    /// Epoch-aligned time after which all honest validators share the same
    /// committee view, derived from GST by the two-case formula.
    pub fn ggst(&self, gst: Tick) -> Tick {
        let e = self.epoch_of_tick(gst.max(0));
        if gst <= self.slot_start(self.last_slot(e)) {
            self.epoch_start(e + 1)
        } else {
            self.epoch_start(e + 2)
        }
    }
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { slots_per_epoch: 32, ticks_per_slot: 12, vote_offset_ticks: 4 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(e: i64, tps: i64, off: i64) -> ChainConfig {
        ChainConfig { slots_per_epoch: e, ticks_per_slot: tps, vote_offset_ticks: off }
    }

    #[test]
    fn slot_epoch_arithmetic() {
        let c = cfg(8, 12, 4);
        assert_eq!(c.first_slot(0), 0);
        assert_eq!(c.last_slot(0), 7);
        assert_eq!(c.first_slot(3), 24);
        assert_eq!(c.last_slot(3), 31);
        for s in 0..64 {
            let e = c.epoch_of_slot(s);
            assert!(c.first_slot(e) <= s && s <= c.last_slot(e));
        }
        assert_eq!(c.slot_start(5), 60);
        assert_eq!(c.slot_of(60), 5);
        assert_eq!(c.slot_of(71), 5);
        assert_eq!(c.slot_of(72), 6);
    }

    #[test]
    fn ggst_two_cases() {
        let c = cfg(4, 12, 4);
        // GST inside an epoch, at or before the start of its last slot.
        assert_eq!(c.ggst(0), c.epoch_start(1));
        assert_eq!(c.ggst(c.slot_start(3)), c.epoch_start(1));
        // GST strictly after the start of the epoch's last slot.
        assert_eq!(c.ggst(c.slot_start(3) + 1), c.epoch_start(2));
        assert_eq!(c.ggst(c.slot_start(6)), c.epoch_start(2));
    }

    #[test]
    fn default_matches_mainnet_figures() {
        let c = ChainConfig::default();
        assert_eq!(c.slots_per_epoch, 32);
        assert_eq!(c.ticks_per_slot, 12);
        assert!(c.validate().is_ok());
    }
}
