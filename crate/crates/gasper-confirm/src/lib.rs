//! Deterministic simulator for the Gasper fork-choice stack (GHOST, LMD-GHOST,
//! LMD-GHOST-HFC with proposer boost) and four fast block-confirmation rules,
//! together with trace-level monitors that check the rules' Safety and
//! Monotonicity guarantees under adversarial network schedules.
//!
//! The crate is a library first: every behaviour reachable from the
//! `gasper-confirm` binary is a plain function call here, and the `examples/`
//! directory has one runnable example per major capability.

pub mod chain;
pub mod confirmation;
pub mod ffg;
pub mod fork_choice;
pub mod monitors;
pub mod simnet;
pub mod sweep;
pub mod trace;
pub mod view;

pub use chain::{
    Block, BlockId, BlockStore, ChainConfig, Checkpoint, CommitteeSchedule, Eba, Epoch, Slot,
    Tick, ValidatorId, ValidatorSet,
};
pub use confirmation::{ConfirmationRule, SafetyParams};
pub use monitors::MonitorReport;
pub use simnet::{
    replay, AdversaryStrategy, CounterexampleName, ScenarioConfig, Simulation, WeightsSpec,
};
pub use trace::SimulationTrace;
