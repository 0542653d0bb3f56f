//! Replica-side permission for a switch to issue single-replica reads.

use serde::Serialize;

use crate::net::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LeaseState {
    pub current_switch_id: u64,
    pub expiry: Nanos,
    /// Every switch ID below this is refused forever.
    pub refused_below: u64,
}

impl LeaseState {
    pub fn new(switch_id: u64, expiry: Nanos) -> Self {
        LeaseState {
            current_switch_id: switch_id,
            expiry,
            refused_below: 0,
        }
    }

    /// Extends the lease of the current switch.
    pub fn renew(&mut self, now: Nanos, duration: Nanos) {
        self.expiry = self.expiry.max(now + duration);
    }

    /// Grants a lease to `switch_id` unless it has been refused.
    pub fn grant(&mut self, switch_id: u64, expiry: Nanos) {
        if switch_id < self.refused_below || switch_id < self.current_switch_id {
            return;
        }
        if switch_id > self.current_switch_id {
            self.current_switch_id = switch_id;
            self.expiry = expiry;
        } else {
            self.expiry = self.expiry.max(expiry);
        }
    }

    /// Cuts the current lease short and moves to `switch_id`. Returns the
    /// expiry of the lease that was revoked.
    pub fn refuse_below(&mut self, switch_id: u64, now: Nanos, duration: Nanos) -> Nanos {
        let old = self.expiry;
        if switch_id > self.refused_below {
            self.refused_below = switch_id;
        }
        if switch_id > self.current_switch_id {
            self.current_switch_id = switch_id;
            self.expiry = now + duration;
        }
        old
    }

    pub fn permits(&self, switch_id: u64, now: Nanos) -> bool {
        switch_id == self.current_switch_id && switch_id >= self.refused_below && now < self.expiry
    }
}
