//! Online linearizability monitor for single-object reads over a totally
//! ordered write log.
//!
//! The [`Oracle`] sees every decision and application made by the replicas
//! and therefore knows the committed log at every instant. When a read
//! leaves the switch the monitor fixes a lower bound (the "ghost"): the
//! newest committed write to the object, or the newest version any earlier
//! read returned, whichever is larger. A response is linearizable if it is
//! no older than its ghost and is itself committed when produced.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::net::Nanos;
use crate::types::{ObjectId, SeqNum, WriteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckMode {
    ReadAhead,
    ReadBehind,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("decided write {new} does not extend the log ending at {last}")]
    NotIncreasing { last: SeqNum, new: SeqNum },
    #[error("replica {replica} reports index {index} beyond the log length {len}")]
    BeyondLog { replica: u32, index: u64, len: u64 },
    #[error("replica {replica} moved backwards from {from} to {to}")]
    Backwards { replica: u32, from: u64, to: u64 },
}

#[derive(Debug, Clone)]
pub struct Oracle {
    mode: CheckMode,
    shared_log: Vec<WriteRecord>,
    index_of: HashMap<SeqNum, u64>,
    /// Per object, `(index, seq)` in log order.
    per_object: HashMap<ObjectId, Vec<(u64, SeqNum)>>,
    applied: BTreeMap<u32, u64>,
    live: BTreeSet<u32>,
}

impl Oracle {
    pub fn new(mode: CheckMode, replicas: impl IntoIterator<Item = u32>) -> Self {
        let live: BTreeSet<u32> = replicas.into_iter().collect();
        Oracle {
            mode,
            shared_log: Vec::new(),
            index_of: HashMap::new(),
            per_object: HashMap::new(),
            applied: live.iter().map(|r| (*r, 0)).collect(),
            live,
        }
    }

    pub fn mode(&self) -> CheckMode {
        self.mode
    }

    pub fn shared_log(&self) -> &[WriteRecord] {
        &self.shared_log
    }

    pub fn record_decided(&mut self, w: WriteRecord) -> Result<u64, OracleError> {
        if let Some(last) = self.shared_log.last() {
            if w.seq <= last.seq {
                return Err(OracleError::NotIncreasing {
                    last: last.seq,
                    new: w.seq,
                });
            }
        }
        let idx = self.shared_log.len() as u64 + 1;
        self.index_of.insert(w.seq, idx);
        self.per_object
            .entry(w.object)
            .or_default()
            .push((idx, w.seq));
        self.shared_log.push(w);
        Ok(idx)
    }

    pub fn record_applied(&mut self, replica: u32, index: u64) -> Result<(), OracleError> {
        let len = self.shared_log.len() as u64;
        if index > len {
            return Err(OracleError::BeyondLog {
                replica,
                index,
                len,
            });
        }
        let cur = self.applied.entry(replica).or_insert(0);
        if index < *cur {
            return Err(OracleError::Backwards {
                replica,
                from: *cur,
                to: index,
            });
        }
        *cur = index;
        Ok(())
    }

    /// A crashed replica no longer holds back the committed prefix; a
    /// recovering one starts from scratch until it reports state.
    pub fn set_live(&mut self, replica: u32, live: bool) {
        if live {
            self.live.insert(replica);
            self.applied.insert(replica, 0);
        } else {
            self.live.remove(&replica);
        }
    }

    pub fn is_live(&self, replica: u32) -> bool {
        self.live.contains(&replica)
    }

    pub fn live(&self) -> impl Iterator<Item = u32> + '_ {
        self.live.iter().copied()
    }

    pub fn applied(&self, replica: u32) -> u64 {
        self.applied.get(&replica).copied().unwrap_or(0)
    }

    /// Length of the committed prefix of the shared log.
    pub fn committed_len(&self) -> u64 {
        match self.mode {
            CheckMode::ReadBehind => self.shared_log.len() as u64,
            CheckMode::ReadAhead => self
                .live
                .iter()
                .map(|r| self.applied(*r))
                .min()
                .unwrap_or(0),
        }
    }

    pub fn index_of(&self, seq: SeqNum) -> Option<u64> {
        self.index_of.get(&seq).copied()
    }

    pub fn is_committed(&self, seq: SeqNum) -> bool {
        self.index_of(seq)
            .is_some_and(|i| i <= self.committed_len())
    }

    pub fn max_committed_for(&self, object: ObjectId) -> SeqNum {
        let Some(list) = self.per_object.get(&object) else {
            return SeqNum::BOTTOM;
        };
        let c = self.committed_len();
        let n = list.partition_point(|(i, _)| *i <= c);
        if n == 0 {
            SeqNum::BOTTOM
        } else {
            list[n - 1].1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// A read returned a version that was not committed.
    Integrity,
    /// A read returned a version older than one it was obliged to see.
    Visibility,
    /// A protocol or switch invariant broke.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub at_ns: Nanos,
    pub object: Option<ObjectId>,
    pub returned: SeqNum,
    pub ghost: SeqNum,
    pub detail: String,
    /// Trace lines up to and including the offending event.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Ok,
    Integrity { returned: SeqNum },
    Visibility { returned: SeqNum, ghost: SeqNum },
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub ok: bool,
    pub mode: CheckMode,
    pub reads_checked: u64,
    pub decided_writes: u64,
    pub committed_writes: u64,
    pub completions_checked: u64,
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone)]
pub struct Monitor {
    oracle: Oracle,
    returned_max: HashMap<ObjectId, SeqNum>,
    violations: Vec<Violation>,
    reads_checked: u64,
    completions_checked: u64,
    now: Nanos,
}

impl Monitor {
    pub fn new(mode: CheckMode, replicas: impl IntoIterator<Item = u32>) -> Self {
        Monitor {
            oracle: Oracle::new(mode, replicas),
            returned_max: HashMap::new(),
            violations: Vec::new(),
            reads_checked: 0,
            completions_checked: 0,
            now: 0,
        }
    }

    pub fn set_time(&mut self, now: Nanos) {
        self.now = now;
    }

    pub fn oracle(&self) -> &Oracle {
        &self.oracle
    }

    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn violations_mut(&mut self) -> &mut [Violation] {
        &mut self.violations
    }

    pub fn record_decided(&mut self, w: WriteRecord) {
        if let Err(e) = self.oracle.record_decided(w) {
            self.structural(None, e.to_string());
        }
    }

    pub fn record_applied(&mut self, replica: u32, index: u64) {
        if let Err(e) = self.oracle.record_applied(replica, index) {
            self.structural(None, e.to_string());
        }
    }

    pub fn set_live(&mut self, replica: u32, live: bool) {
        self.oracle.set_live(replica, live);
    }

    fn structural(&mut self, object: Option<ObjectId>, detail: String) {
        self.violations.push(Violation {
            kind: ViolationKind::Structural,
            at_ns: self.now,
            object,
            returned: SeqNum::BOTTOM,
            ghost: SeqNum::BOTTOM,
            detail,
            witness: None,
        });
    }

    /// Lower bound any response to a read of `object` issued now must meet.
    pub fn on_read_issued(&self, object: ObjectId) -> SeqNum {
        let returned = self
            .returned_max
            .get(&object)
            .copied()
            .unwrap_or(SeqNum::BOTTOM);
        self.oracle.max_committed_for(object).max(returned)
    }

    /// Judges a response at the instant the replica produces it.
    pub fn on_read_response(
        &mut self,
        object: ObjectId,
        returned: SeqNum,
        ghost: SeqNum,
    ) -> Verdict {
        self.reads_checked += 1;
        let m = self.returned_max.entry(object).or_insert(SeqNum::BOTTOM);
        *m = (*m).max(returned);
        let verdict = if returned < ghost {
            Verdict::Visibility { returned, ghost }
        } else if !returned.is_bottom() && !self.oracle.is_committed(returned) {
            Verdict::Integrity { returned }
        } else {
            Verdict::Ok
        };
        let (kind, detail) = match verdict {
            Verdict::Ok => return verdict,
            Verdict::Visibility { .. } => (
                ViolationKind::Visibility,
                format!("read of {object} returned {returned}, older than {ghost}"),
            ),
            Verdict::Integrity { .. } => (
                ViolationKind::Integrity,
                format!("read of {object} returned uncommitted {returned}"),
            ),
        };
        self.violations.push(Violation {
            kind,
            at_ns: self.now,
            object: Some(object),
            returned,
            ghost,
            detail,
            witness: None,
        });
        verdict
    }

    /// A completion for `seq` may only leave once the write is durable:
    /// applied at every live replica, or executed by `quorum` replicas.
    pub fn on_completion(&mut self, seq: SeqNum, quorum: Option<usize>) {
        self.completions_checked += 1;
        let Some(idx) = self.oracle.index_of(seq) else {
            self.structural(None, format!("completion for undecided write {seq}"));
            return;
        };
        let ok = match quorum {
            None => self.oracle.live().all(|r| self.oracle.applied(r) >= idx),
            Some(q) => self.oracle.applied.values().filter(|a| **a >= idx).count() >= q,
        };
        if !ok {
            self.structural(
                None,
                format!("completion for {seq} sent before the write was durable"),
            );
        }
    }

    /// Every entry ever removed from a switch's dirty set must be covered by
    /// that switch's last-committed point.
    pub fn check_switch(&mut self, switch_id: u64, removed_max: SeqNum, last_committed: SeqNum) {
        if removed_max > last_committed {
            self.structural(
                None,
                format!("switch {switch_id} removed {removed_max} from its dirty set but has only seen {last_committed} commit"),
            );
        }
    }

    pub fn report(&self) -> Report {
        Report {
            ok: self.violations.is_empty(),
            mode: self.oracle.mode,
            reads_checked: self.reads_checked,
            decided_writes: self.oracle.shared_log.len() as u64,
            committed_writes: self.oracle.committed_len(),
            completions_checked: self.completions_checked,
            violations: self.violations.clone(),
        }
    }
}
