//! One replica of the replicated store, for every supported protocol.
//!
//! Handlers are pure state transitions: they take a message, mutate local
//! state and push messages and observations into an [`Outbox`]. Protocol
//! messages carry a 1-based log `index`; receivers accept only the next
//! index and answer duplicates with a cumulative acknowledgement.

use std::collections::{BTreeMap, HashMap};

use super::{
    gate_read_ahead, gate_read_behind, CompletionDelay, GateDecision, LeaseState, Observation,
    Outbox, Protocol, ProtocolConfig,
};
use crate::net::Nanos;
use crate::store::{ApplyOutcome, ReplicaStore};
use crate::types::{Message, MsgKind, NodeId, ObjectId, RequestId, WriteRecord};

#[derive(Debug, Clone)]
struct Entry {
    rec: WriteRecord,
    request: RequestId,
    sent_at: Nanos,
    committed_at: Nanos,
}

#[derive(Debug, Clone)]
pub struct Replica {
    id: u32,
    cfg: ProtocolConfig,
    members: Vec<u32>,
    store: ReplicaStore,
    log: Vec<Entry>,
    /// Highest index known committed. At CR/CRAQ non-tail nodes this is the
    /// tail's progress as last reported.
    commit_point: u64,
    /// VR only: entries executed into `store`.
    executed: u64,
    /// VR leader: entries whose completion has been sent.
    completion_point: u64,
    /// PB state-update acks or VR prepare-oks, cumulative per peer.
    acked: BTreeMap<u32, u64>,
    /// VR commit-acks, cumulative per follower.
    exec_acked: BTreeMap<u32, u64>,
    commit_sent_at: BTreeMap<u32, Nanos>,
    last_index_of: HashMap<ObjectId, u64>,
    deferred: Vec<Message>,
    lease: LeaseState,
    chain_ack_sent: u64,
    /// Log entries that arrived ahead of a gap, keyed by index.
    ahead: BTreeMap<u64, Message>,
}

impl Replica {
    pub fn new(id: u32, cfg: ProtocolConfig) -> Self {
        let members = cfg.replicas.clone();
        let lease = LeaseState::new(1, cfg.lease_duration_ns);
        Replica {
            id,
            cfg,
            members,
            store: ReplicaStore::new(),
            log: Vec::new(),
            commit_point: 0,
            executed: 0,
            completion_point: 0,
            acked: BTreeMap::new(),
            exec_acked: BTreeMap::new(),
            commit_sent_at: BTreeMap::new(),
            last_index_of: HashMap::new(),
            deferred: Vec::new(),
            lease,
            chain_ack_sent: 0,
            ahead: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u32 {
        self.id
    }

    pub fn store(&self) -> &ReplicaStore {
        &self.store
    }

    pub fn log_len(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn commit_point(&self) -> u64 {
        self.commit_point
    }

    pub fn lease(&self) -> &LeaseState {
        &self.lease
    }

    pub fn members(&self) -> &[u32] {
        &self.members
    }

    /// Entries applied to (PB, CR, CRAQ) or executed into (VR) the store.
    pub fn applied_index(&self) -> u64 {
        match self.cfg.protocol {
            Protocol::Vr => self.executed,
            _ => self.log_len(),
        }
    }

    fn me(&self) -> NodeId {
        NodeId::Replica(self.id)
    }

    fn pos(&self) -> Option<usize> {
        self.members.iter().position(|m| *m == self.id)
    }

    fn is_first(&self) -> bool {
        self.members.first() == Some(&self.id)
    }

    fn is_last(&self) -> bool {
        self.members.last() == Some(&self.id)
    }

    fn succ(&self) -> Option<u32> {
        self.pos().and_then(|p| self.members.get(p + 1).copied())
    }

    fn pred(&self) -> Option<u32> {
        self.pos().filter(|p| *p > 0).map(|p| self.members[p - 1])
    }

    fn others(&self) -> Vec<u32> {
        self.members
            .iter()
            .copied()
            .filter(|m| *m != self.id)
            .collect()
    }

    fn entry(&self, i: u64) -> &Entry {
        &self.log[(i - 1) as usize]
    }

    fn entry_msg(&self, kind: MsgKind, i: u64, dst: u32) -> Message {
        let e = self.entry(i);
        Message::new(kind, self.me(), NodeId::Replica(dst))
            .with_object(e.rec.object)
            .with_seq(e.rec.seq)
            .with_index(i)
            .with_request(e.request)
            .with_payload(e.rec.value.clone())
    }

    fn ctrl_msg(&self, kind: MsgKind, dst: u32, index: u64) -> Message {
        Message::new(kind, self.me(), NodeId::Replica(dst)).with_index(index)
    }

    fn send_reply(&self, i: u64, out: &mut Outbox) {
        let e = self.entry(i);
        out.msgs.push(
            Message::new(
                MsgKind::WriteReply,
                self.me(),
                NodeId::Client(e.request.client),
            )
            .with_object(e.rec.object)
            .with_seq(e.rec.seq)
            .with_request(e.request),
        );
    }

    fn send_completion(&self, i: u64, piggyback: bool, out: &mut Outbox) {
        let e = self.entry(i);
        let mut m = Message::new(
            MsgKind::WriteCompletion,
            self.me(),
            NodeId::Switch(e.rec.seq.switch_id),
        )
        .with_object(e.rec.object)
        .with_seq(e.rec.seq)
        .with_index(i)
        .with_request(e.request);
        m.piggyback = piggyback;
        out.msgs.push(m);
        out.obs.push(Observation::CompletionSent {
            replica: self.id,
            seq: e.rec.seq,
        });
    }

    /// Appends and applies a write. `None` if the store refuses it.
    fn append_applied(&mut self, now: Nanos, rec: WriteRecord, request: RequestId) -> Option<u64> {
        if self.store.apply_write(rec.clone()) == ApplyOutcome::RejectedOutOfOrder {
            return None;
        }
        self.last_index_of
            .insert(rec.object, self.log.len() as u64 + 1);
        self.log.push(Entry {
            rec,
            request,
            sent_at: now,
            committed_at: 0,
        });
        Some(self.log_len())
    }

    pub fn on_message(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        match msg.kind {
            MsgKind::Write => self.on_client_write(now, msg, out),
            MsgKind::Read => self.on_read(now, msg, out),
            MsgKind::StateUpdate
            | MsgKind::ChainForward
            | MsgKind::CraqDirtyMark
            | MsgKind::Prepare => self.on_entry(now, msg, out),
            MsgKind::StateUpdateAck => self.pb_on_ack(msg, out),
            MsgKind::ChainAck => {
                self.commit_point = self.commit_point.max(msg.index.min(self.log_len()))
            }
            MsgKind::CraqCommit => self.craq_on_commit(msg, out),
            MsgKind::PrepareOk => self.vr_on_prepare_ok(now, msg, out),
            MsgKind::Commit => self.vr_on_commit(msg, out),
            MsgKind::CommitAck => self.vr_on_commit_ack(now, msg, out),
            MsgKind::LeaseRevoke => {
                let old = self
                    .lease
                    .refuse_below(msg.switch_id, now, self.cfg.lease_duration_ns);
                let mut ack = Message::new(MsgKind::LeaseGrant, self.me(), NodeId::Controller);
                ack.switch_id = msg.switch_id;
                ack.expiry = old;
                out.msgs.push(ack);
            }
            MsgKind::LeaseGrant => self.lease.grant(msg.switch_id, msg.expiry),
            _ => {}
        }
    }

    /// Periodic work: lease renewal, retransmission and progress reports.
    pub fn on_tick(&mut self, now: Nanos, out: &mut Outbox) {
        self.lease.renew(now, self.cfg.lease_duration_ns);
        let rto = self.cfg.retransmit_ns;
        let aged = |e: &Entry| now >= e.sent_at + rto;
        match self.cfg.protocol {
            Protocol::Pb if self.is_first() => {
                for i in self.commit_point + 1..=self.log_len() {
                    if !aged(self.entry(i)) {
                        continue;
                    }
                    for b in self.others() {
                        if self.acked.get(&b).copied().unwrap_or(0) < i {
                            out.msgs.push(self.entry_msg(MsgKind::StateUpdate, i, b));
                        }
                    }
                    self.log[(i - 1) as usize].sent_at = now;
                }
            }
            Protocol::Cr | Protocol::Craq => {
                if self.is_last()
                    && self.cfg.protocol == Protocol::Cr
                    && self.commit_point > self.chain_ack_sent
                {
                    for m in self.others() {
                        out.msgs
                            .push(self.ctrl_msg(MsgKind::ChainAck, m, self.commit_point));
                    }
                    self.chain_ack_sent = self.commit_point;
                }
                if self.is_first() && !self.is_last() {
                    let kind = if self.cfg.protocol == Protocol::Cr {
                        MsgKind::ChainForward
                    } else {
                        MsgKind::CraqDirtyMark
                    };
                    let succ = self.succ().expect("not last");
                    for i in self.commit_point + 1..=self.log_len() {
                        if aged(self.entry(i)) {
                            out.msgs.push(self.entry_msg(kind, i, succ));
                            self.log[(i - 1) as usize].sent_at = now;
                        }
                    }
                }
            }
            Protocol::Vr if self.is_first() => {
                let followers = self.others();
                let floor = followers
                    .iter()
                    .map(|f| self.acked.get(f).copied().unwrap_or(0))
                    .min()
                    .unwrap_or(self.log_len());
                for i in floor + 1..=self.log_len() {
                    let lagging: Vec<u32> = followers
                        .iter()
                        .copied()
                        .filter(|f| self.acked.get(f).copied().unwrap_or(0) < i)
                        .collect();
                    if lagging.is_empty() || !aged(self.entry(i)) {
                        continue;
                    }
                    for f in lagging {
                        out.msgs.push(self.entry_msg(MsgKind::Prepare, i, f));
                    }
                    self.log[(i - 1) as usize].sent_at = now;
                }
                for f in followers {
                    let done = self.exec_acked.get(&f).copied().unwrap_or(0);
                    let last = self.commit_sent_at.get(&f).copied().unwrap_or(0);
                    if done < self.commit_point && now >= last + rto {
                        out.msgs
                            .push(self.ctrl_msg(MsgKind::Commit, f, self.commit_point));
                        self.commit_sent_at.insert(f, now);
                    }
                }
                self.vr_try_complete(now, out);
            }
            _ => {}
        }
    }

    /// Installs a new membership, e.g. after a crash or a recovery.
    pub fn set_members(&mut self, now: Nanos, members: Vec<u32>, out: &mut Outbox) {
        let was_last = self.is_last();
        let old_succ = self.succ();
        self.members = members;
        match self.cfg.protocol {
            Protocol::Pb if self.is_first() => self.pb_advance(out),
            Protocol::Cr | Protocol::Craq => {
                if self.is_last() && !was_last {
                    self.chain_ack_sent = 0;
                    let len = self.log_len();
                    self.tail_commit(len, out);
                } else if let Some(s) = self.succ().filter(|s| Some(*s) != old_succ) {
                    let kind = if self.cfg.protocol == Protocol::Cr {
                        MsgKind::ChainForward
                    } else {
                        MsgKind::CraqDirtyMark
                    };
                    for i in self.commit_point + 1..=self.log_len() {
                        out.msgs.push(self.entry_msg(kind, i, s));
                    }
                }
            }
            Protocol::Vr if self.is_first() => {
                self.vr_advance_commit(now, out);
                self.vr_try_complete(now, out);
            }
            _ => {}
        }
    }

    /// Copies the full state of `src`, as the controller does for a
    /// replica rejoining after a crash.
    pub fn install_from(&mut self, src: &Replica, out: &mut Outbox) {
        self.store = src.store.clone();
        self.log = src.log.clone();
        self.last_index_of = src.last_index_of.clone();
        self.commit_point = src.commit_point;
        self.executed = src.executed;
        self.lease = src.lease;
        self.chain_ack_sent = src.commit_point;
        out.obs.push(Observation::Applied {
            replica: self.id,
            index: self.applied_index(),
        });
    }

    /// Records at the coordinator that `peer` holds everything this replica has.
    pub fn note_caught_up(&mut self, peer: u32) {
        self.acked.insert(peer, self.log_len());
        self.exec_acked.insert(peer, self.executed);
    }

    /// Replication traffic carrying log entry `msg.index`. Entries past a
    /// gap wait until the gap fills instead of waiting for a retransmission.
    fn on_entry(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        if msg.index > self.log_len() + 1 {
            self.ahead.insert(msg.index, msg);
            return;
        }
        self.entry_in_order(now, msg, out);
        while let Some(next) = self.ahead.remove(&(self.log_len() + 1)) {
            let before = self.log_len();
            self.entry_in_order(now, next, out);
            if self.log_len() == before {
                break;
            }
        }
        let keep = self.ahead.split_off(&(self.log_len() + 1));
        self.ahead = keep;
    }

    fn entry_in_order(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        match msg.kind {
            MsgKind::StateUpdate => self.pb_on_state_update(now, msg, out),
            MsgKind::ChainForward => self.cr_on_forward(now, msg, out),
            MsgKind::CraqDirtyMark => self.craq_on_mark(now, msg, out),
            MsgKind::Prepare => self.vr_on_prepare(now, msg, out),
            _ => unreachable!("not a log entry"),
        }
    }

    fn on_client_write(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        if !self.is_first() {
            return;
        }
        let rec = msg.write_record();
        if self.cfg.protocol == Protocol::Vr {
            if self.log.last().is_some_and(|e| e.rec.seq >= rec.seq)
                || rec.seq <= self.store.last_executed()
            {
                out.obs.push(Observation::WriteRejected {
                    replica: self.id,
                    seq: rec.seq,
                });
                return;
            }
            self.log.push(Entry {
                rec,
                request: msg.request,
                sent_at: now,
                committed_at: 0,
            });
            let i = self.log_len();
            for f in self.others() {
                out.msgs.push(self.entry_msg(MsgKind::Prepare, i, f));
            }
            self.vr_advance_commit(now, out);
            return;
        }
        let Some(i) = self.append_applied(now, rec.clone(), msg.request) else {
            out.obs.push(Observation::WriteRejected {
                replica: self.id,
                seq: rec.seq,
            });
            return;
        };
        out.obs.push(Observation::Decided(rec));
        out.obs.push(Observation::Applied {
            replica: self.id,
            index: i,
        });
        match self.cfg.protocol {
            Protocol::Pb => {
                for b in self.others() {
                    out.msgs.push(self.entry_msg(MsgKind::StateUpdate, i, b));
                }
                self.pb_advance(out);
            }
            Protocol::Cr | Protocol::Craq if self.is_last() => self.tail_commit(i, out),
            Protocol::Cr => out.msgs.push(self.entry_msg(
                MsgKind::ChainForward,
                i,
                self.succ().expect("not last"),
            )),
            Protocol::Craq => out.msgs.push(self.entry_msg(
                MsgKind::CraqDirtyMark,
                i,
                self.succ().expect("not last"),
            )),
            Protocol::Vr => unreachable!(),
        }
    }

    fn on_read(&mut self, now: Nanos, mut msg: Message, out: &mut Outbox) {
        if msg.single_replica {
            let m = self.cfg.mutations;
            let lease_ok = m.stale_switch_reads || self.lease.permits(msg.switch_id, now);
            let gate_ok = if self.cfg.read_behind() {
                m.read_behind_gate_off
                    || gate_read_behind(msg.last_committed, self.store.last_executed())
                        == GateDecision::ServeLocal
            } else {
                m.read_ahead_gate_off
                    || gate_read_ahead(msg.last_committed, self.store.object_seq(msg.object))
                        == GateDecision::ServeLocal
            };
            if lease_ok && gate_ok {
                self.serve(&msg, true, out);
                return;
            }
            out.obs.push(Observation::GateRejected {
                replica: self.id,
                lease: !lease_ok,
            });
            msg.single_replica = false;
        }
        self.normal_read(msg, out);
    }

    fn object_uncommitted(&self, o: ObjectId) -> bool {
        self.last_index_of
            .get(&o)
            .is_some_and(|i| *i > self.commit_point)
    }

    fn normal_read(&mut self, msg: Message, out: &mut Outbox) {
        let target = match self.cfg.protocol {
            Protocol::Pb | Protocol::Vr => self.members.first().copied(),
            Protocol::Cr => self.members.last().copied(),
            Protocol::Craq if !self.object_uncommitted(msg.object) => Some(self.id),
            Protocol::Craq => self.members.last().copied(),
        };
        match target {
            Some(t) if t == self.id => {
                if self.cfg.protocol == Protocol::Pb && self.object_uncommitted(msg.object) {
                    self.deferred.push(msg);
                } else {
                    self.serve(&msg, false, out);
                }
            }
            Some(t) => out.msgs.push(msg.redirect(self.me(), NodeId::Replica(t))),
            None => {}
        }
    }

    fn serve(&self, msg: &Message, single: bool, out: &mut Outbox) {
        let (value, seq) = self.store.read_local(msg.object);
        out.obs.push(Observation::Served {
            replica: self.id,
            object: msg.object,
            returned: seq,
            ghost: msg.ghost_last_response,
            single,
            request: msg.request,
        });
        let mut reply = Message::new(
            MsgKind::ReadReply,
            self.me(),
            NodeId::Client(msg.request.client),
        )
        .with_object(msg.object)
        .with_seq(seq)
        .with_request(msg.request)
        .with_payload(value.map(<[u8]>::to_vec).unwrap_or_default());
        reply.single_replica = single;
        reply.ghost_last_response = msg.ghost_last_response;
        out.msgs.push(reply);
    }

    // Primary-backup.

    fn pb_on_state_update(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        let i = msg.index;
        if i == self.log_len() + 1 {
            if self
                .append_applied(now, msg.write_record(), msg.request)
                .is_none()
            {
                return;
            }
            out.obs.push(Observation::Applied {
                replica: self.id,
                index: i,
            });
        }
        if i <= self.log_len() {
            out.msgs.push(
                Message::new(MsgKind::StateUpdateAck, self.me(), msg.src)
                    .with_index(self.log_len()),
            );
        }
    }

    fn pb_on_ack(&mut self, msg: Message, out: &mut Outbox) {
        let NodeId::Replica(b) = msg.src else { return };
        if !self.is_first() {
            return;
        }
        let a = self.acked.entry(b).or_insert(0);
        *a = (*a).max(msg.index);
        self.pb_advance(out);
    }

    fn pb_advance(&mut self, out: &mut Outbox) {
        let backups = self.others();
        while self.commit_point < self.log_len() {
            let next = self.commit_point + 1;
            if !backups
                .iter()
                .all(|b| self.acked.get(b).copied().unwrap_or(0) >= next)
            {
                break;
            }
            self.commit_point = next;
            self.send_reply(next, out);
            self.send_completion(next, false, out);
        }
        if !self.deferred.is_empty() {
            let pending = std::mem::take(&mut self.deferred);
            let (ready, blocked): (Vec<_>, Vec<_>) = pending
                .into_iter()
                .partition(|m| !self.object_uncommitted(m.object));
            self.deferred = blocked;
            for m in ready {
                self.serve(&m, false, out);
            }
        }
    }

    // Chain replication and CRAQ.

    /// The tail commits everything up to `i`.
    fn tail_commit(&mut self, i: u64, out: &mut Outbox) {
        let from = self.commit_point + 1;
        for j in from..=i {
            self.send_reply(j, out);
            self.send_completion(j, self.cfg.protocol == Protocol::Cr, out);
        }
        self.commit_point = self.commit_point.max(i);
        if self.cfg.protocol == Protocol::Craq && i >= from {
            if let Some(p) = self.pred() {
                out.msgs.push(self.ctrl_msg(MsgKind::CraqCommit, p, i));
            }
        }
    }

    fn cr_on_forward(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        let i = msg.index;
        if i == self.log_len() + 1 {
            if self
                .append_applied(now, msg.write_record(), msg.request)
                .is_none()
            {
                return;
            }
            out.obs.push(Observation::Applied {
                replica: self.id,
                index: i,
            });
            if self.is_last() {
                self.tail_commit(i, out);
            } else if let Some(s) = self.succ() {
                out.msgs.push(self.entry_msg(MsgKind::ChainForward, i, s));
            }
        } else if i <= self.log_len() {
            if self.is_last() {
                // Upstream is retransmitting, so its view of our progress is stale.
                self.chain_ack_sent = 0;
            } else if let Some(s) = self.succ() {
                out.msgs.push(self.entry_msg(MsgKind::ChainForward, i, s));
            }
        }
    }

    fn craq_on_mark(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        let i = msg.index;
        if i == self.log_len() + 1 {
            if self
                .append_applied(now, msg.write_record(), msg.request)
                .is_none()
            {
                return;
            }
            out.obs.push(Observation::Applied {
                replica: self.id,
                index: i,
            });
            if self.is_last() {
                self.tail_commit(i, out);
            } else if let Some(s) = self.succ() {
                out.msgs.push(self.entry_msg(MsgKind::CraqDirtyMark, i, s));
            }
        } else if i <= self.log_len() {
            if self.is_last() {
                if let Some(p) = self.pred() {
                    out.msgs
                        .push(self.ctrl_msg(MsgKind::CraqCommit, p, self.commit_point));
                }
            } else if let Some(s) = self.succ() {
                out.msgs.push(self.entry_msg(MsgKind::CraqDirtyMark, i, s));
            }
        }
    }

    fn craq_on_commit(&mut self, msg: Message, out: &mut Outbox) {
        self.commit_point = self.commit_point.max(msg.index.min(self.log_len()));
        if let Some(p) = self.pred() {
            out.msgs
                .push(self.ctrl_msg(MsgKind::CraqCommit, p, msg.index));
        }
    }

    // Viewstamped replication with a fixed leader.

    fn vr_on_prepare(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        if self.is_first() {
            return;
        }
        let i = msg.index;
        if i == self.log_len() + 1 {
            self.log.push(Entry {
                rec: msg.write_record(),
                request: msg.request,
                sent_at: now,
                committed_at: 0,
            });
        }
        if i <= self.log_len() {
            out.msgs.push(
                Message::new(MsgKind::PrepareOk, self.me(), msg.src).with_index(self.log_len()),
            );
        }
        self.vr_execute(out);
    }

    fn vr_on_prepare_ok(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        let NodeId::Replica(f) = msg.src else { return };
        if !self.is_first() {
            return;
        }
        let a = self.acked.entry(f).or_insert(0);
        *a = (*a).max(msg.index);
        self.vr_advance_commit(now, out);
    }

    fn vr_advance_commit(&mut self, now: Nanos, out: &mut Outbox) {
        let followers = self.others();
        while self.commit_point < self.log_len() {
            let next = self.commit_point + 1;
            let votes = 1 + followers
                .iter()
                .filter(|f| self.acked.get(f).copied().unwrap_or(0) >= next)
                .count();
            if votes < self.cfg.quorum {
                break;
            }
            self.commit_point = next;
            self.executed = next;
            let e = &mut self.log[(next - 1) as usize];
            e.committed_at = now;
            let rec = e.rec.clone();
            self.store.apply_write(rec.clone());
            out.obs.push(Observation::Decided(rec));
            out.obs.push(Observation::Applied {
                replica: self.id,
                index: next,
            });
            self.send_reply(next, out);
            for f in &followers {
                out.msgs.push(self.ctrl_msg(MsgKind::Commit, *f, next));
                self.commit_sent_at.insert(*f, now);
            }
        }
        self.vr_try_complete(now, out);
    }

    fn vr_execute(&mut self, out: &mut Outbox) {
        let upto = self.commit_point.min(self.log_len());
        while self.executed < upto {
            self.executed += 1;
            let rec = self.entry(self.executed).rec.clone();
            self.store.apply_write(rec);
            out.obs.push(Observation::Applied {
                replica: self.id,
                index: self.executed,
            });
        }
    }

    fn vr_on_commit(&mut self, msg: Message, out: &mut Outbox) {
        if self.is_first() {
            return;
        }
        self.commit_point = self.commit_point.max(msg.index);
        self.vr_execute(out);
        let mut ack =
            Message::new(MsgKind::CommitAck, self.me(), msg.src).with_index(self.executed);
        ack.piggyback = self.cfg.piggyback_commit_ack;
        out.msgs.push(ack);
    }

    fn vr_on_commit_ack(&mut self, now: Nanos, msg: Message, out: &mut Outbox) {
        let NodeId::Replica(f) = msg.src else { return };
        if !self.is_first() {
            return;
        }
        let a = self.exec_acked.entry(f).or_insert(0);
        *a = (*a).max(msg.index);
        self.vr_try_complete(now, out);
    }

    fn vr_try_complete(&mut self, now: Nanos, out: &mut Outbox) {
        let followers = self.others();
        while self.completion_point < self.commit_point {
            let j = self.completion_point + 1;
            let done = followers
                .iter()
                .filter(|f| self.exec_acked.get(f).copied().unwrap_or(0) >= j)
                .count();
            let quorum = 1 + done >= self.cfg.quorum;
            let all = done == followers.len();
            let ok = quorum
                && match self.cfg.completion_delay {
                    CompletionDelay::Quorum => true,
                    CompletionDelay::All => all,
                    CompletionDelay::Timeout(d) => all || now >= self.entry(j).committed_at + d,
                };
            if !ok {
                break;
            }
            self.completion_point = j;
            self.send_completion(j, false, out);
        }
    }
}
