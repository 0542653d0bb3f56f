//! Explicit-state model checker for the abstract protocol: finite data
//! items, switches and replicas, a bounded write counter and a depth bound.

mod explore;
mod model;

pub use explore::{check, fingerprint, render_trace, replay, McOutcome};
pub use model::{
    Action, McConfig, McConfigError, McMsg, McMutation, McState, McSwitch, McViolation, McWrite,
};
