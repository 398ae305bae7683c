//! Chain model shared by every other module: slot/epoch arithmetic, effective
//! balances, the block/checkpoint DAG and per-epoch committee schedules.

mod block;
mod committee;
mod eba;
mod time;

pub use block::{Block, BlockDraft, BlockId, BlockRuntime, BlockStore, ChainError, Checkpoint, ChurnSchedule};
pub use committee::CommitteeSchedule;
pub use eba::{Eba, ValidatorId, ValidatorSet, MAX_VALIDATORS};
pub use time::{ChainConfig, Epoch, Slot, Tick};
