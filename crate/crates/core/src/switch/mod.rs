//! The in-network request scheduler.

mod capacity;
mod reference;
mod scheduler;
mod table;

pub use capacity::{capacity, Capacity, CapacityError, CapacityParams};
pub use reference::ReferenceSwitch;
pub use scheduler::{
    DropReason, NormalReadTarget, SchedulingOutcome, SwitchConfig, SwitchState, SwitchStats,
};
pub use table::{stage_hash, InsertOutcome, MultiStageTable};
