//! In-network conflict detection for replicated storage, plus a
//! deterministic simulator, linearizability checker and model checker.

pub mod checker;
pub mod harness;
pub mod mc;
pub mod net;
pub mod protocols;
pub mod store;
pub mod switch;
pub mod types;
pub mod workload;

pub use store::{ApplyOutcome, ReplicaStore};
pub use switch::{DropReason, MultiStageTable, SchedulingOutcome, SwitchConfig, SwitchState};
pub use types::{
    gt, gte, hash_object_id, seq_compare, Message, MsgKind, NodeId, ObjectId, RequestId, SeqNum,
    WriteRecord,
};
