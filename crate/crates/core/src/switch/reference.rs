//! Direct transliteration of the switch algorithm over an unbounded map.
//!
//! Used as the differential oracle for [`SwitchState`](super::SwitchState):
//! whenever the bounded table never fills up, both must schedule every
//! packet identically.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scheduler::{NormalReadTarget, SchedulingOutcome};
use crate::types::{Message, MsgKind, NodeId, ObjectId, SeqNum};

#[derive(Debug, Clone)]
pub struct ReferenceSwitch {
    switch_id: u64,
    seq: u64,
    dirty_set: HashMap<ObjectId, SeqNum>,
    last_committed: SeqNum,
    replicas: Vec<u32>,
    seen_own_completion: bool,
    read_target: NormalReadTarget,
    rng: ChaCha8Rng,
}

impl ReferenceSwitch {
    pub fn new(
        switch_id: u64,
        replicas: Vec<u32>,
        read_target: NormalReadTarget,
        seed: u64,
    ) -> Self {
        ReferenceSwitch {
            switch_id,
            seq: 0,
            dirty_set: HashMap::new(),
            last_committed: SeqNum::BOTTOM,
            replicas,
            seen_own_completion: false,
            read_target,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dirty_len(&self) -> usize {
        self.dirty_set.len()
    }

    pub fn process(&mut self, pkt: &mut Message) -> SchedulingOutcome {
        if pkt.kind == MsgKind::Write {
            self.seq += 1;
            pkt.seq = SeqNum::new(self.switch_id, self.seq);
            self.dirty_set.insert(pkt.object, pkt.seq);
            SchedulingOutcome::ForwardNormal(NodeId::Replica(self.replicas[0]))
        } else if pkt.kind == MsgKind::WriteCompletion {
            if let Some(&pending) = self.dirty_set.get(&pkt.object) {
                if pkt.seq >= pending {
                    self.dirty_set.remove(&pkt.object);
                }
            }
            self.last_committed = self.last_committed.max(pkt.seq);
            if pkt.seq.switch_id == self.switch_id {
                self.seen_own_completion = true;
            }
            SchedulingOutcome::Consumed
        } else if pkt.kind == MsgKind::Read {
            // Stray entries already covered by the commit point do not count.
            if matches!(self.dirty_set.get(&pkt.object), Some(&s) if s <= self.last_committed) {
                self.dirty_set.remove(&pkt.object);
            }
            if !self.dirty_set.contains_key(&pkt.object) && self.seen_own_completion {
                pkt.last_committed = self.last_committed;
                pkt.single_replica = true;
                pkt.switch_id = self.switch_id;
                let r = self.replicas[self.rng.gen_range(0..self.replicas.len())];
                SchedulingOutcome::ForwardSingleReplica {
                    dst: NodeId::Replica(r),
                    last_committed: self.last_committed,
                }
            } else {
                let r = match self.read_target {
                    NormalReadTarget::First => self.replicas[0],
                    NormalReadTarget::Last => *self.replicas.last().unwrap(),
                    NormalReadTarget::Random => {
                        self.replicas[self.rng.gen_range(0..self.replicas.len())]
                    }
                };
                SchedulingOutcome::ForwardNormal(NodeId::Replica(r))
            }
        } else {
            SchedulingOutcome::PassThrough
        }
    }
}
