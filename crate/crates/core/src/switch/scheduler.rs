//! Per-packet request scheduling at the switch.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{InsertOutcome, MultiStageTable};
use crate::types::{Message, MsgKind, NodeId, ObjectId, SeqNum};

/// Where the normal protocol wants reads delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalReadTarget {
    /// Primary or leader: the first replica in order.
    First,
    /// Chain tail: the last replica in order.
    Last,
    /// Any replica, chosen at random (CRAQ).
    Random,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchedulingOutcome {
    ForwardNormal(NodeId),
    ForwardSingleReplica {
        dst: NodeId,
        last_committed: SeqNum,
    },
    DropWrite(DropReason),
    /// A write completion was absorbed by the switch.
    Consumed,
    PassThrough,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropReason {
    TableFull,
    /// The switch has not yet been cleared to send writes after failover.
    WritesDisabled,
}

#[derive(Debug, Clone)]
pub struct SwitchConfig {
    pub switch_id: u64,
    pub stages: usize,
    pub slots: usize,
    /// `false` turns the switch into a plain sequencer/forwarder.
    pub harmonia: bool,
    pub read_target: NormalReadTarget,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SwitchState {
    switch_id: u64,
    counter: u64,
    dirty: MultiStageTable,
    last_committed: SeqNum,
    /// Fast-path candidates.
    replicas: Vec<u32>,
    /// Protocol membership in order, used for normal-path routing.
    members: Vec<u32>,
    single_replica_enabled: bool,
    writes_enabled: bool,
    harmonia: bool,
    read_target: NormalReadTarget,
    rng: ChaCha8Rng,
    removed_max: SeqNum,
    pub stats: SwitchStats,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct SwitchStats {
    pub writes_stamped: u64,
    pub dropped_full: u64,
    pub dropped_disabled: u64,
    pub completions: u64,
    pub reads_normal: u64,
    pub reads_single: u64,
    pub gc_removed: u64,
}

impl SwitchState {
    pub fn new(cfg: &SwitchConfig, replicas: Vec<u32>) -> Self {
        assert!(cfg.switch_id >= 1, "switch IDs start at 1");
        SwitchState {
            switch_id: cfg.switch_id,
            counter: 0,
            dirty: MultiStageTable::new(cfg.stages, cfg.slots),
            last_committed: SeqNum::BOTTOM,
            members: replicas.clone(),
            replicas,
            single_replica_enabled: false,
            writes_enabled: true,
            harmonia: cfg.harmonia,
            read_target: cfg.read_target,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            removed_max: SeqNum::BOTTOM,
            stats: SwitchStats::default(),
        }
    }

    pub fn switch_id(&self) -> u64 {
        self.switch_id
    }

    pub fn last_committed(&self) -> SeqNum {
        self.last_committed
    }

    pub fn single_replica_enabled(&self) -> bool {
        self.single_replica_enabled
    }

    pub fn writes_enabled(&self) -> bool {
        self.writes_enabled
    }

    pub fn set_writes_enabled(&mut self, enabled: bool) {
        self.writes_enabled = enabled;
    }

    pub fn replicas(&self) -> &[u32] {
        &self.replicas
    }

    pub fn dirty(&self) -> &MultiStageTable {
        &self.dirty
    }

    pub fn dirty_len(&self) -> usize {
        self.dirty.len()
    }

    /// Largest sequence number ever removed from the dirty set.
    pub fn removed_max(&self) -> SeqNum {
        self.removed_max
    }

    /// Replaces the fast-path set. Single-replica reads only target members.
    pub fn set_replica_set(&mut self, replicas: Vec<u32>) {
        self.replicas = replicas;
    }

    /// Replaces the protocol membership used to route normal-path traffic.
    pub fn set_members(&mut self, members: Vec<u32>) {
        self.members = members;
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    pub fn process_packet(&mut self, pkt: &mut Message) -> SchedulingOutcome {
        match pkt.kind {
            MsgKind::Write => self.handle_write(pkt),
            MsgKind::WriteCompletion => self.handle_write_completion(pkt),
            MsgKind::Read => self.handle_read(pkt),
            _ => SchedulingOutcome::PassThrough,
        }
    }

    fn normal_write_dst(&self) -> Option<NodeId> {
        self.members.first().map(|r| NodeId::Replica(*r))
    }

    fn normal_read_dst(&mut self) -> Option<NodeId> {
        let r = match self.read_target {
            NormalReadTarget::First => self.members.first().copied(),
            NormalReadTarget::Last => self.members.last().copied(),
            NormalReadTarget::Random if self.members.is_empty() => None,
            NormalReadTarget::Random => {
                Some(self.members[self.rng.gen_range(0..self.members.len())])
            }
        };
        r.map(NodeId::Replica)
    }

    pub fn handle_write(&mut self, pkt: &mut Message) -> SchedulingOutcome {
        if !self.writes_enabled {
            self.stats.dropped_disabled += 1;
            return SchedulingOutcome::DropWrite(DropReason::WritesDisabled);
        }
        let Some(dst) = self.normal_write_dst() else {
            self.stats.dropped_disabled += 1;
            return SchedulingOutcome::DropWrite(DropReason::WritesDisabled);
        };
        let seq = SeqNum::new(self.switch_id, self.counter + 1);
        if self.harmonia && self.dirty.insert(pkt.object, seq) == InsertOutcome::Full {
            self.stats.dropped_full += 1;
            return SchedulingOutcome::DropWrite(DropReason::TableFull);
        }
        self.counter += 1;
        pkt.seq = seq;
        self.stats.writes_stamped += 1;
        SchedulingOutcome::ForwardNormal(dst)
    }

    pub fn handle_write_completion(&mut self, pkt: &Message) -> SchedulingOutcome {
        self.stats.completions += 1;
        if self.harmonia {
            if let Some(pending) = self.dirty.search(pkt.object) {
                if pkt.seq >= pending {
                    self.dirty.delete(pkt.object);
                    self.removed_max = self.removed_max.max(pending);
                }
            }
            self.last_committed = self.last_committed.max(pkt.seq);
            if pkt.seq.switch_id == self.switch_id {
                self.single_replica_enabled = true;
            }
        }
        SchedulingOutcome::Consumed
    }

    pub fn handle_read(&mut self, pkt: &mut Message) -> SchedulingOutcome {
        let contended = self.harmonia && self.probe_dirty(pkt.object);
        if !self.harmonia || contended || !self.single_replica_enabled || self.replicas.is_empty() {
            self.stats.reads_normal += 1;
            return match self.normal_read_dst() {
                Some(dst) => SchedulingOutcome::ForwardNormal(dst),
                None => SchedulingOutcome::PassThrough,
            };
        }
        let r = self.replicas[self.rng.gen_range(0..self.replicas.len())];
        pkt.single_replica = true;
        pkt.last_committed = self.last_committed;
        pkt.switch_id = self.switch_id;
        self.stats.reads_single += 1;
        SchedulingOutcome::ForwardSingleReplica {
            dst: NodeId::Replica(r),
            last_committed: self.last_committed,
        }
    }

    /// Dirty-set membership for a read, dropping the entry on the way if it
    /// is a stray already covered by the commit point.
    fn probe_dirty(&mut self, object: ObjectId) -> bool {
        match self.dirty.search(object) {
            Some(seq) if seq <= self.last_committed => {
                self.dirty.delete(object);
                self.removed_max = self.removed_max.max(seq);
                self.stats.gc_removed += 1;
                false
            }
            Some(_) => true,
            None => false,
        }
    }

    /// Periodic sweep of entries whose writes are known committed.
    pub fn gc_stray_entries(&mut self) -> usize {
        let removed = self.dirty.retain_above(self.last_committed);
        if let Some(m) = removed.iter().map(|(_, s)| *s).max() {
            self.removed_max = self.removed_max.max(m);
        }
        self.stats.gc_removed += removed.len() as u64;
        removed.len()
    }

    pub fn contains_dirty(&self, object: ObjectId) -> bool {
        self.dirty.entries().any(|(o, _)| o == object)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RequestId;

    fn cfg(stages: usize, slots: usize) -> SwitchConfig {
        SwitchConfig {
            switch_id: 1,
            stages,
            slots,
            harmonia: true,
            read_target: NormalReadTarget::Last,
            seed: 7,
        }
    }

    fn write(o: u32) -> Message {
        Message::new(MsgKind::Write, NodeId::Client(0), NodeId::Switch(1)).with_object(ObjectId(o))
    }

    fn read(o: u32) -> Message {
        Message::new(MsgKind::Read, NodeId::Client(0), NodeId::Switch(1)).with_object(ObjectId(o))
    }

    fn completion(o: u32, seq: SeqNum) -> Message {
        Message::new(
            MsgKind::WriteCompletion,
            NodeId::Replica(2),
            NodeId::Switch(1),
        )
        .with_object(ObjectId(o))
        .with_seq(seq)
    }

    fn enabled_switch() -> SwitchState {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0, 1, 2]);
        let mut w = write(1000);
        sw.process_packet(&mut w);
        sw.process_packet(&mut completion(1000, w.seq));
        assert!(sw.single_replica_enabled());
        sw
    }

    #[test]
    fn write_is_stamped_and_tracked() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0, 1, 2]);
        sw.counter = 7;
        let mut w = write(1);
        assert_eq!(
            sw.process_packet(&mut w),
            SchedulingOutcome::ForwardNormal(NodeId::Replica(0))
        );
        assert_eq!(w.seq, SeqNum::new(1, 8));
        assert_eq!(sw.dirty.search(ObjectId(1)), Some(SeqNum::new(1, 8)));
    }

    #[test]
    fn read_of_dirty_object_takes_normal_path() {
        let mut sw = enabled_switch();
        let mut w = write(5);
        sw.process_packet(&mut w);
        let mut r = read(5);
        assert_eq!(
            sw.process_packet(&mut r),
            SchedulingOutcome::ForwardNormal(NodeId::Replica(2))
        );
        assert!(!r.single_replica);
    }

    #[test]
    fn clean_read_goes_to_one_replica_with_stamp() {
        let mut sw = enabled_switch();
        let mut r = read(6);
        match sw.process_packet(&mut r) {
            SchedulingOutcome::ForwardSingleReplica {
                dst: NodeId::Replica(x),
                last_committed,
            } => {
                assert!(x < 3);
                assert_eq!(last_committed, SeqNum::new(1, 1));
                assert!(r.single_replica);
                assert_eq!(r.last_committed, SeqNum::new(1, 1));
                assert_eq!(r.switch_id, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn fresh_switch_routes_all_reads_normally() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0, 1, 2]);
        for o in 0..10 {
            assert!(matches!(
                sw.process_packet(&mut read(o)),
                SchedulingOutcome::ForwardNormal(_)
            ));
        }
        // A completion for an older switch's write does not enable the fast path.
        sw.process_packet(&mut completion(1, SeqNum::new(0, 5)));
        assert!(!sw.single_replica_enabled());
    }

    #[test]
    fn completion_guard() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0]);
        sw.last_committed = SeqNum::new(1, 5);
        sw.dirty.insert(ObjectId(1), SeqNum::new(1, 8));
        sw.process_packet(&mut completion(1, SeqNum::new(1, 8)));
        assert_eq!(sw.dirty.search(ObjectId(1)), None);
        assert_eq!(sw.last_committed(), SeqNum::new(1, 8));

        sw.dirty.insert(ObjectId(2), SeqNum::new(1, 9));
        sw.process_packet(&mut completion(2, SeqNum::new(1, 8)));
        assert_eq!(sw.dirty.search(ObjectId(2)), Some(SeqNum::new(1, 9)));
        assert_eq!(sw.last_committed(), SeqNum::new(1, 8));

        sw.process_packet(&mut completion(3, SeqNum::new(1, 10)));
        assert_eq!(sw.last_committed(), SeqNum::new(1, 10));
        assert_eq!(sw.dirty_len(), 1);
    }

    #[test]
    fn last_committed_never_decreases() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0]);
        sw.process_packet(&mut completion(1, SeqNum::new(1, 9)));
        sw.process_packet(&mut completion(1, SeqNum::new(1, 3)));
        assert_eq!(sw.last_committed(), SeqNum::new(1, 9));
    }

    #[test]
    fn full_table_drops_write_without_consuming_seq() {
        let mut sw = SwitchState::new(&cfg(1, 1), vec![0]);
        let mut a = write(1);
        sw.process_packet(&mut a);
        let mut b = write(2);
        assert_eq!(
            sw.process_packet(&mut b),
            SchedulingOutcome::DropWrite(DropReason::TableFull)
        );
        assert_eq!(b.seq, SeqNum::BOTTOM);
        let mut c = write(1);
        sw.process_packet(&mut c);
        assert_eq!(c.seq, SeqNum::new(1, 2));
    }

    #[test]
    fn gc_removes_entries_at_or_below_commit_point() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0]);
        sw.dirty.insert(ObjectId(1), SeqNum::new(1, 3));
        sw.dirty.insert(ObjectId(2), SeqNum::new(1, 9));
        sw.last_committed = SeqNum::new(1, 5);
        assert_eq!(sw.gc_stray_entries(), 1);
        assert!(sw.contains_dirty(ObjectId(2)));
        assert_eq!(sw.gc_stray_entries(), 0);
        sw.last_committed = SeqNum::new(1, 9);
        assert_eq!(sw.gc_stray_entries(), 1);
        assert_eq!(sw.dirty_len(), 0);
        assert!(sw.removed_max() <= sw.last_committed());
    }

    #[test]
    fn stray_entry_is_cleared_by_read_probe() {
        let mut sw = enabled_switch();
        sw.dirty.insert(ObjectId(4), SeqNum::new(1, 1));
        assert!(matches!(
            sw.process_packet(&mut read(4)),
            SchedulingOutcome::ForwardSingleReplica { .. }
        ));
        assert!(!sw.contains_dirty(ObjectId(4)));
    }

    #[test]
    fn replica_choice_is_seeded() {
        let picks = |seed| {
            let mut c = cfg(3, 64);
            c.seed = seed;
            let mut sw = SwitchState::new(&c, vec![0, 1, 2]);
            let mut w = write(1000);
            sw.process_packet(&mut w);
            sw.process_packet(&mut completion(1000, w.seq));
            (0..50)
                .map(|o| match sw.process_packet(&mut read(o)) {
                    SchedulingOutcome::ForwardSingleReplica { dst, .. } => dst,
                    other => panic!("{other:?}"),
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(picks(11), picks(11));
    }

    #[test]
    fn removed_replica_is_never_targeted() {
        let mut sw = enabled_switch();
        sw.set_replica_set(vec![0, 1]);
        let mut hits = [0u32; 3];
        for i in 0..10_000u32 {
            if let SchedulingOutcome::ForwardSingleReplica {
                dst: NodeId::Replica(r),
                ..
            } = sw.process_packet(&mut read(i % 500))
            {
                hits[r as usize] += 1;
            }
        }
        assert_eq!(hits[2], 0);
        assert_eq!(hits[0] + hits[1], 10_000);

        sw.set_replica_set(vec![]);
        assert_eq!(
            sw.process_packet(&mut read(1)),
            SchedulingOutcome::ForwardNormal(NodeId::Replica(2))
        );

        sw.set_replica_set(vec![0, 1, 2]);
        let mut saw_two = false;
        for i in 0..200 {
            if let SchedulingOutcome::ForwardSingleReplica {
                dst: NodeId::Replica(2),
                ..
            } = sw.process_packet(&mut read(i))
            {
                saw_two = true;
            }
        }
        assert!(saw_two);
    }

    #[test]
    fn other_traffic_passes_through() {
        let mut sw = SwitchState::new(&cfg(3, 64), vec![0]);
        let mut m = Message::new(MsgKind::Prepare, NodeId::Replica(0), NodeId::Replica(1))
            .with_request(RequestId::default());
        assert_eq!(sw.process_packet(&mut m), SchedulingOutcome::PassThrough);
    }

    #[test]
    fn harmonia_off_forwards_everything_normally() {
        let mut c = cfg(3, 64);
        c.harmonia = false;
        let mut sw = SwitchState::new(&c, vec![0, 1, 2]);
        let mut w = write(1);
        assert_eq!(
            sw.process_packet(&mut w),
            SchedulingOutcome::ForwardNormal(NodeId::Replica(0))
        );
        assert_eq!(w.seq, SeqNum::new(1, 1));
        sw.process_packet(&mut completion(1, w.seq));
        assert_eq!(
            sw.process_packet(&mut read(2)),
            SchedulingOutcome::ForwardNormal(NodeId::Replica(2))
        );
        assert_eq!(sw.dirty_len(), 0);
    }
}
