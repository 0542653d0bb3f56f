//! Admission checks for reads that reached a single replica.

use serde::Serialize;

use crate::types::SeqNum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GateDecision {
    ServeLocal,
    ForwardNormal,
}

/// For protocols whose replicas may hold applied-but-uncommitted writes: the
/// local version must not be newer than the switch's last-committed point.
pub fn gate_read_ahead(q_commit: SeqNum, obj_seq: SeqNum) -> GateDecision {
    if q_commit >= obj_seq {
        GateDecision::ServeLocal
    } else {
        GateDecision::ForwardNormal
    }
}

/// For protocols whose replicas may lag: the replica must have executed
/// everything the switch has seen committed.
pub fn gate_read_behind(q_commit: SeqNum, last_executed: SeqNum) -> GateDecision {
    if q_commit <= last_executed {
        GateDecision::ServeLocal
    } else {
        GateDecision::ForwardNormal
    }
}
