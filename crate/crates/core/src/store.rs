//! Per-replica versioned key-value store.

use std::collections::HashMap;

use serde::Serialize;

use crate::types::{ObjectId, SeqNum, WriteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ApplyOutcome {
    Applied,
    RejectedOutOfOrder,
}

#[derive(Debug, Clone, Default)]
pub struct ReplicaStore {
    table: HashMap<ObjectId, (Vec<u8>, SeqNum)>,
    last_executed: SeqNum,
    log: Vec<WriteRecord>,
}

impl ReplicaStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Applies `w` only if it is newer than everything applied so far.
    pub fn apply_write(&mut self, w: WriteRecord) -> ApplyOutcome {
        if w.seq <= self.last_executed {
            return ApplyOutcome::RejectedOutOfOrder;
        }
        self.table.insert(w.object, (w.value.clone(), w.seq));
        self.last_executed = w.seq;
        self.log.push(w);
        ApplyOutcome::Applied
    }

    /// Value and version of `o`; absent objects report `SeqNum::BOTTOM`.
    pub fn read_local(&self, o: ObjectId) -> (Option<&[u8]>, SeqNum) {
        match self.table.get(&o) {
            Some((v, s)) => (Some(v.as_slice()), *s),
            None => (None, SeqNum::BOTTOM),
        }
    }

    pub fn object_seq(&self, o: ObjectId) -> SeqNum {
        self.table.get(&o).map_or(SeqNum::BOTTOM, |(_, s)| *s)
    }

    pub fn last_executed(&self) -> SeqNum {
        self.last_executed
    }

    pub fn log(&self) -> &[WriteRecord] {
        &self.log
    }

    /// Number of writes applied.
    pub fn applied(&self) -> u64 {
        self.log.len() as u64
    }

    /// Checks the store's structural invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        if let Some(w) = self.log.windows(2).find(|w| w[0].seq >= w[1].seq) {
            return Err(format!(
                "log not increasing at {} -> {}",
                w[0].seq, w[1].seq
            ));
        }
        if let Some((o, (_, s))) = self
            .table
            .iter()
            .find(|(_, (_, s))| *s > self.last_executed)
        {
            return Err(format!(
                "{o} at {s} is ahead of last executed {}",
                self.last_executed
            ));
        }
        Ok(())
    }
}
