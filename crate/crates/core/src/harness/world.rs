//! One simulated deployment: clients, switches, replicas, a controller and
//! the network between them, driven by a single event loop.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::mem;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use super::config::{ConfigError, RunConfig};
use super::metrics::{Metrics, Recorder};
use crate::checker::{CheckMode, Monitor, Report};
use crate::net::{EventQueue, Fault, LivelockError, Nanos, Network, StopCondition};
use crate::protocols::{Observation, Outbox, Protocol, ProtocolConfig, Replica};
use crate::switch::{DropReason, SchedulingOutcome, SwitchConfig, SwitchState};
use crate::types::{Message, MsgKind, NodeId, ObjectId, RequestId};
use crate::workload::{derive_seed, OpKind, Workload};

/// Witnesses keep at most this many trailing trace lines.
const WITNESS_LINES: usize = 10_000;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Livelock(#[from] LivelockError),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOutput {
    pub metrics: Metrics,
    pub report: Report,
    /// JSON-lines event trace; empty unless tracing was requested.
    #[serde(skip)]
    pub trace: Vec<String>,
}

#[derive(Debug, Clone)]
enum Ev {
    Deliver(Message),
    Process {
        replica: u32,
        epoch: u64,
        msg: Message,
    },
    Tick(u32),
    Gc(u64),
    Sample,
    Issue(u32),
    Timeout {
        client: u32,
        op: u64,
    },
    Preload(u32),
    OpenLoop,
    Fault(usize),
    RouteUpdate {
        switch_id: u64,
        client: u32,
    },
    EnableWrites(u64),
}

#[derive(Serialize)]
struct TraceLine<'a> {
    t: Nanos,
    ev: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    kind: Option<MsgKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    src: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dst: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    obj: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seq: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    idx: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

impl<'a> TraceLine<'a> {
    fn bare(t: Nanos, ev: &'a str) -> Self {
        TraceLine {
            t,
            ev,
            kind: None,
            src: None,
            dst: None,
            obj: None,
            seq: None,
            idx: None,
            note: None,
        }
    }

    fn msg(t: Nanos, ev: &'a str, m: &Message) -> Self {
        TraceLine {
            kind: Some(m.kind),
            src: Some(m.src.to_string()),
            dst: Some(m.dst.to_string()),
            obj: Some(m.object.0),
            seq: Some(m.seq.to_string()),
            idx: (m.index > 0).then_some(m.index),
            ..Self::bare(t, ev)
        }
    }
}

struct ReplicaNode {
    r: Replica,
    alive: bool,
    busy_until: Nanos,
    epoch: u64,
}

struct SwitchNode {
    st: SwitchState,
    alive: bool,
}

struct Pending {
    op: u64,
    kind: OpKind,
    object: ObjectId,
    started: Nanos,
}

struct Client {
    rng: ChaCha8Rng,
    next_op: u64,
    pending: Option<Pending>,
}

struct Activation {
    switch_id: u64,
    acked: BTreeSet<u32>,
    old_expiry: Nanos,
}

struct World {
    cfg: RunConfig,
    pcfg: ProtocolConfig,
    now: Nanos,
    new_events: Vec<(Nanos, Ev)>,
    net: Network,
    workload: Workload,
    replicas: Vec<ReplicaNode>,
    switches: BTreeMap<u64, SwitchNode>,
    clients: Vec<Client>,
    open_rng: ChaCha8Rng,
    open_next_op: u64,
    open_pending: HashMap<u64, (OpKind, Nanos)>,
    open_next_at: f64,
    preload_pending: BTreeSet<u32>,
    members: Vec<u32>,
    /// Switch each client sends to, indexed by client ID.
    routes: Vec<u64>,
    activation: Option<Activation>,
    faults: Vec<Fault>,
    partitions: Vec<(Nanos, Nanos, BTreeSet<NodeId>)>,
    monitor: Monitor,
    rec: Recorder,
    trace: Vec<String>,
    out: Outbox,
    stopping: bool,
}

/// Runs one simulation to completion.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let mut w = World::new(cfg.clone());
    w.bootstrap();
    let mut q: EventQueue<Ev> = EventQueue::new();
    for (at, e) in w.new_events.drain(..) {
        q.schedule(at, e);
    }
    let stop_on_violation = cfg.stop_on_violation;
    let mut handler = |q: &mut EventQueue<Ev>, t: Nanos, ev: Ev| {
        w.now = t;
        w.monitor.set_time(t);
        let before = w.monitor.violations().len();
        w.handle(ev);
        for (at, e) in w.new_events.drain(..) {
            q.schedule(at, e);
        }
        let after = w.monitor.violations().len();
        if after > before {
            w.attach_witness(before);
            if stop_on_violation {
                return false;
            }
        }
        true
    };
    let mut events = q.run_until(
        StopCondition::Time(cfg.duration_ns),
        cfg.max_events,
        &mut handler,
    )?;
    let halted = q.peek_time().is_some_and(|t| t <= cfg.duration_ns);
    if cfg.drain_ns > 0 && !halted {
        handler(&mut q, cfg.duration_ns, Ev::Sample);
        events += q.run_until(
            StopCondition::Time(cfg.duration_ns + cfg.drain_ns),
            cfg.max_events,
            &mut handler,
        )?;
    }
    Ok(w.finish(events))
}

impl World {
    fn new(cfg: RunConfig) -> Self {
        let pcfg = cfg.protocol_config();
        let mode = if cfg.protocol.read_behind() {
            CheckMode::ReadBehind
        } else {
            CheckMode::ReadAhead
        };
        let mut net_cfg = cfg.net.clone();
        net_cfg.rng_seed ^= derive_seed(cfg.seed, u64::MAX);
        let members: Vec<u32> = (0..cfg.replicas).collect();
        let replicas = members
            .iter()
            .map(|i| ReplicaNode {
                r: Replica::new(*i, pcfg.clone()),
                alive: true,
                busy_until: 0,
                epoch: 0,
            })
            .collect();
        let clients = (0..cfg.workload.clients)
            .map(|c| Client {
                rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, c as u64)),
                next_op: 0,
                pending: None,
            })
            .collect();
        let partitions = cfg
            .faults
            .0
            .iter()
            .filter_map(|f| match f {
                Fault::Partition {
                    at_ns,
                    until_ns,
                    nodes,
                } => Some((*at_ns, *until_ns, nodes.iter().copied().collect())),
                _ => None,
            })
            .collect();
        World {
            pcfg,
            now: 0,
            new_events: Vec::new(),
            net: Network::new(net_cfg),
            workload: Workload::new(&cfg.workload),
            replicas,
            switches: BTreeMap::new(),
            clients,
            open_rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX - 1)),
            open_next_op: 0,
            open_pending: HashMap::new(),
            open_next_at: 0.0,
            preload_pending: (0..cfg.preload_keys).collect(),
            members: members.clone(),
            routes: vec![1; cfg.workload.clients as usize + 2],
            activation: None,
            faults: cfg.faults.sorted(),
            partitions,
            monitor: Monitor::new(mode, members),
            rec: Recorder::new(cfg.replicas, cfg.warmup_ns, cfg.duration_ns, cfg.bin_ns),
            trace: Vec::new(),
            out: Outbox::default(),
            stopping: false,
            cfg,
        }
    }

    fn schedule(&mut self, at: Nanos, ev: Ev) {
        self.new_events.push((at, ev));
    }

    fn tracing(&self) -> bool {
        self.cfg.trace
    }

    fn log(&mut self, line: TraceLine<'_>) {
        self.trace
            .push(serde_json::to_string(&line).expect("trace line serializes"));
    }

    fn bootstrap(&mut self) {
        self.add_switch(1, true);
        for r in 0..self.cfg.replicas {
            // Stagger ticks so replicas do not act in lockstep.
            let at = self.cfg.tick_ns * (r as u64 + 1) / (self.cfg.replicas as u64 + 1);
            self.schedule(at, Ev::Tick(r));
        }
        for c in 0..self.cfg.workload.clients {
            self.schedule(c as Nanos, Ev::Issue(c));
        }
        for k in 0..self.cfg.preload_keys {
            self.schedule(k as Nanos, Ev::Preload(k));
        }
        if self.cfg.workload.open_loop.is_some() {
            self.schedule(0, Ev::OpenLoop);
        }
        self.schedule(0, Ev::Sample);
        for i in 0..self.faults.len() {
            self.schedule(self.faults[i].at(), Ev::Fault(i));
        }
    }

    fn add_switch(&mut self, switch_id: u64, writes_enabled: bool) {
        let sc = SwitchConfig {
            switch_id,
            stages: self.cfg.switch.stages,
            slots: self.cfg.switch.slots,
            harmonia: self.cfg.effective_harmonia(),
            read_target: self.cfg.protocol.normal_read_target(),
            seed: derive_seed(self.cfg.seed, 1 << 40 | switch_id),
        };
        let mut st = SwitchState::new(&sc, self.members.clone());
        st.set_writes_enabled(writes_enabled);
        if writes_enabled {
            self.rec.m.writes_enabled_at.insert(switch_id, self.now);
        }
        self.switches
            .insert(switch_id, SwitchNode { st, alive: true });
        if self.cfg.switch.gc_interval_ns > 0 {
            self.schedule(self.now + self.cfg.switch.gc_interval_ns, Ev::Gc(switch_id));
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Deliver(m) => self.deliver(m),
            Ev::Process {
                replica,
                epoch,
                msg,
            } => {
                let node = &mut self.replicas[replica as usize];
                if !node.alive || node.epoch != epoch {
                    return;
                }
                if self.cfg.trace {
                    self.log(TraceLine::msg(self.now, "process", &msg));
                }
                let mut out = mem::take(&mut self.out);
                self.replicas[replica as usize]
                    .r
                    .on_message(self.now, msg, &mut out);
                self.drain(&mut out);
                self.out = out;
            }
            Ev::Tick(r) => {
                if self.replicas[r as usize].alive {
                    let mut out = mem::take(&mut self.out);
                    self.replicas[r as usize].r.on_tick(self.now, &mut out);
                    self.drain(&mut out);
                    self.out = out;
                }
                self.schedule(self.now + self.cfg.tick_ns, Ev::Tick(r));
            }
            Ev::Gc(sid) => {
                let Some(sw) = self.switches.get_mut(&sid).filter(|s| s.alive) else {
                    return;
                };
                sw.st.gc_stray_entries();
                let (rm, lc) = (sw.st.removed_max(), sw.st.last_committed());
                self.monitor.check_switch(sid, rm, lc);
                self.schedule(self.now + self.cfg.switch.gc_interval_ns, Ev::Gc(sid));
            }
            Ev::Sample => {
                if let Some(sw) = self.switches.values().rev().find(|s| s.alive) {
                    let d = sw.st.dirty_len();
                    self.rec.m.dirty_occupancy.push((self.now, d));
                    self.rec.m.max_dirty = self.rec.m.max_dirty.max(d);
                }
                if self.now >= self.cfg.duration_ns {
                    self.stopping = true;
                } else {
                    self.schedule(self.now + self.cfg.sample_ns, Ev::Sample);
                }
            }
            Ev::Issue(c) => {
                if !self.stopping {
                    self.issue(c);
                }
            }
            Ev::Timeout { client, op } => {
                let timeout = self.cfg.client_timeout();
                let retry = match &self.clients[client as usize].pending {
                    Some(p) if p.op == op => Some((p.kind, p.object)),
                    _ => None,
                };
                if let Some((kind, object)) = retry {
                    self.rec.m.retries += 1;
                    self.send_op(client, op, kind, object);
                    self.schedule(self.now + timeout, Ev::Timeout { client, op });
                }
            }
            Ev::Preload(k) => {
                if self.preload_pending.contains(&k) {
                    let object = self.workload.object(k);
                    self.send_op(self.loader_id(), k as u64, OpKind::Write, object);
                    let timeout = self.cfg.client_timeout();
                    self.schedule(self.now + timeout, Ev::Preload(k));
                }
            }
            Ev::OpenLoop => self.open_loop(),
            Ev::Fault(i) => self.apply_fault(i),
            Ev::RouteUpdate { switch_id, client } => {
                let r = &mut self.routes[client as usize];
                *r = (*r).max(switch_id);
            }
            Ev::EnableWrites(sid) => {
                if let Some(sw) = self.switches.get_mut(&sid).filter(|s| s.alive) {
                    sw.st.set_writes_enabled(true);
                    self.rec.m.writes_enabled_at.insert(sid, self.now);
                }
            }
        }
    }

    fn issue(&mut self, c: u32) {
        let wr = self.cfg.workload.write_ratio;
        let cl = &mut self.clients[c as usize];
        let op = self.workload.next_op(wr, &mut cl.rng);
        let id = cl.next_op;
        cl.next_op += 1;
        let object = self.workload.object(op.key);
        cl.pending = Some(Pending {
            op: id,
            kind: op.kind,
            object,
            started: self.now,
        });
        self.send_op(c, id, op.kind, object);
        let timeout = self.cfg.client_timeout();
        self.schedule(self.now + timeout, Ev::Timeout { client: c, op: id });
    }

    fn open_client_id(&self) -> u32 {
        self.cfg.workload.clients
    }

    fn loader_id(&self) -> u32 {
        self.cfg.workload.clients + 1
    }

    fn open_loop(&mut self) {
        let Some(ol) = self.cfg.workload.open_loop else {
            return;
        };
        if self.stopping {
            return;
        }
        let op = self.workload.next_op(ol.write_ratio, &mut self.open_rng);
        let id = self.open_next_op;
        self.open_next_op += 1;
        self.open_pending.insert(id, (op.kind, self.now));
        let object = self.workload.object(op.key);
        self.send_op(self.open_client_id(), id, op.kind, object);
        self.open_next_at += 1e9 / ol.rate_per_sec;
        self.schedule(self.open_next_at.round() as Nanos, Ev::OpenLoop);
    }

    fn send_op(&mut self, client: u32, op: u64, kind: OpKind, object: ObjectId) {
        let mk = if kind == OpKind::Read {
            MsgKind::Read
        } else {
            MsgKind::Write
        };
        let m = Message::new(
            mk,
            NodeId::Client(client),
            NodeId::Switch(self.routes[client as usize]),
        )
        .with_object(object)
        .with_request(RequestId { client, op })
        .with_payload(op.to_le_bytes().to_vec());
        self.send(m);
    }

    fn node_alive(&self, n: NodeId) -> bool {
        match n {
            NodeId::Replica(r) => self.replicas.get(r as usize).is_some_and(|x| x.alive),
            NodeId::Switch(s) => self.switches.get(&s).is_some_and(|x| x.alive),
            _ => true,
        }
    }

    fn partitioned(&self, a: NodeId, b: NodeId) -> bool {
        self.partitions.iter().any(|(from, until, set)| {
            self.now >= *from && self.now < *until && set.contains(&a) != set.contains(&b)
        })
    }

    fn send(&mut self, m: Message) {
        if !self.node_alive(m.src) {
            return;
        }
        self.rec.message(m.kind, m.piggyback);
        if self.tracing() {
            self.log(TraceLine::msg(self.now, "send", &m));
        }
        if m.src == NodeId::Controller || m.dst == NodeId::Controller {
            // The control plane is slow but reliable.
            let at = self.now + self.cfg.net.base_delay_ns;
            self.schedule(at, Ev::Deliver(m));
            return;
        }
        if self.partitioned(m.src, m.dst) {
            return;
        }
        let times = self.net.send(self.now, m.src, m.dst);
        match times.len() {
            0 => {}
            1 => self.schedule(times[0], Ev::Deliver(m)),
            _ => {
                for t in times {
                    self.schedule(t, Ev::Deliver(m.clone()));
                }
            }
        }
    }

    fn deliver(&mut self, m: Message) {
        if !self.node_alive(m.dst) {
            return;
        }
        if self.tracing() {
            self.log(TraceLine::msg(self.now, "deliver", &m));
        }
        match m.dst {
            NodeId::Switch(sid) => self.at_switch(sid, m),
            NodeId::Replica(r) => {
                let cost = match m.kind {
                    MsgKind::Read => self.cfg.read_cost_ns,
                    MsgKind::Write
                    | MsgKind::ChainForward
                    | MsgKind::StateUpdate
                    | MsgKind::Prepare
                    | MsgKind::CraqDirtyMark
                    | MsgKind::CraqCommit => self.cfg.write_cost_ns,
                    _ => self.cfg.ctrl_cost_ns,
                };
                let node = &mut self.replicas[r as usize];
                let start = node.busy_until.max(self.now);
                node.busy_until = start + cost;
                let (at, epoch) = (node.busy_until, node.epoch);
                self.schedule(
                    at,
                    Ev::Process {
                        replica: r,
                        epoch,
                        msg: m,
                    },
                );
            }
            NodeId::Client(c) => self.at_client(c, m),
            NodeId::Controller => self.at_controller(m),
        }
    }

    fn at_switch(&mut self, sid: u64, mut m: Message) {
        let sw = self.switches.get_mut(&sid).expect("alive switch exists");
        let outcome = sw.st.process_packet(&mut m);
        match outcome {
            SchedulingOutcome::ForwardNormal(dst)
            | SchedulingOutcome::ForwardSingleReplica { dst, .. } => {
                if m.kind == MsgKind::Read {
                    if m.single_replica {
                        self.rec.m.switch_single_reads += 1;
                    } else {
                        self.rec.m.switch_normal_reads += 1;
                    }
                    m.ghost_last_response = self.monitor.on_read_issued(m.object);
                }
                let fwd = m.redirect(NodeId::Switch(sid), dst);
                self.send(fwd);
            }
            SchedulingOutcome::DropWrite(DropReason::TableFull) => self.rec.m.dropped_writes += 1,
            SchedulingOutcome::DropWrite(DropReason::WritesDisabled) => {
                self.rec.m.writes_disabled_drops += 1
            }
            SchedulingOutcome::Consumed => {
                let st = &sw.st;
                let (rm, lc, own) = (
                    st.removed_max(),
                    st.last_committed(),
                    st.single_replica_enabled(),
                );
                self.monitor.check_switch(sid, rm, lc);
                if own && !self.rec.m.first_own_completion_at.contains_key(&sid) {
                    self.rec.m.first_own_completion_at.insert(sid, self.now);
                }
            }
            SchedulingOutcome::PassThrough => {}
        }
    }

    fn at_client(&mut self, c: u32, m: Message) {
        let kind = match m.kind {
            MsgKind::ReadReply => OpKind::Read,
            MsgKind::WriteReply => OpKind::Write,
            _ => return,
        };
        if c == self.loader_id() {
            if kind == OpKind::Write {
                self.preload_pending.remove(&(m.request.op as u32));
            }
            return;
        }
        if c == self.open_client_id() {
            if let Some((k, started)) = self.open_pending.remove(&m.request.op) {
                if k == kind {
                    self.rec.op_done(kind, self.now, self.now - started);
                }
            }
            return;
        }
        let cl = &mut self.clients[c as usize];
        match &cl.pending {
            Some(p) if p.op == m.request.op && p.kind == kind => {
                let started = p.started;
                cl.pending = None;
                self.rec.op_done(kind, self.now, self.now - started);
                self.schedule(self.now, Ev::Issue(c));
            }
            _ => {}
        }
    }

    fn at_controller(&mut self, m: Message) {
        if m.kind != MsgKind::LeaseGrant {
            return;
        }
        let NodeId::Replica(r) = m.src else { return };
        let Some(act) = self
            .activation
            .as_mut()
            .filter(|a| a.switch_id == m.switch_id)
        else {
            return;
        };
        act.acked.insert(r);
        act.old_expiry = act.old_expiry.max(m.expiry);
        self.maybe_enable_writes();
    }

    /// The new switch may send writes once every live replica refuses the
    /// old switch and the old lease has run out or been cut short.
    fn maybe_enable_writes(&mut self) {
        let Some(act) = &self.activation else { return };
        if !self.members.iter().all(|r| act.acked.contains(r)) {
            return;
        }
        let sid = act.switch_id;
        let lease_over = if self.cfg.lease_cut_short {
            self.now
        } else {
            act.old_expiry.max(self.now)
        };
        self.activation = None;
        self.schedule(
            lease_over + self.cfg.net.base_delay_ns,
            Ev::EnableWrites(sid),
        );
    }

    fn drain(&mut self, out: &mut Outbox) {
        let quorum = self.cfg.protocol.read_behind().then_some(self.pcfg.quorum);
        for ob in out.obs.drain(..) {
            match ob {
                Observation::Decided(w) => self.monitor.record_decided(w),
                Observation::Applied { replica, index } => {
                    self.monitor.record_applied(replica, index)
                }
                Observation::Served {
                    replica,
                    object,
                    returned,
                    ghost,
                    single,
                    ..
                } => {
                    self.rec.m.reads_served[replica as usize] += 1;
                    if single {
                        self.rec.m.single_reads_served[replica as usize] += 1;
                    }
                    self.monitor.on_read_response(object, returned, ghost);
                }
                Observation::GateRejected { lease, .. } => {
                    if lease {
                        self.rec.m.lease_rejections += 1;
                    } else {
                        self.rec.m.gate_rejections += 1;
                    }
                }
                Observation::CompletionSent { seq, .. } => self.monitor.on_completion(seq, quorum),
                Observation::WriteRejected { .. } => self.rec.m.rejected_writes += 1,
            }
        }
        for m in out.msgs.drain(..) {
            self.send(m);
        }
    }

    fn apply_fault(&mut self, i: usize) {
        let f = self.faults[i].clone();
        if self.tracing() {
            let mut line = TraceLine::bare(self.now, "fault");
            line.note = Some(format!("{f:?}"));
            self.log(line);
        }
        match f {
            Fault::CrashSwitch { .. } => {
                if let Some(sw) = self.switches.values_mut().rev().find(|s| s.alive) {
                    sw.alive = false;
                }
            }
            Fault::ActivateSwitch { switch_id, .. } => {
                self.add_switch(switch_id, false);
                self.activation = Some(Activation {
                    switch_id,
                    acked: BTreeSet::new(),
                    old_expiry: 0,
                });
                for r in self.members.clone() {
                    let mut m =
                        Message::new(MsgKind::LeaseRevoke, NodeId::Controller, NodeId::Replica(r));
                    m.switch_id = switch_id;
                    self.send(m);
                }
                // Clients learn the new route one by one across the delay.
                let n = self.routes.len() as u64;
                for client in 0..n {
                    let at = self.now + self.cfg.route_update_delay_ns * (client + 1) / n;
                    self.schedule(
                        at,
                        Ev::RouteUpdate {
                            switch_id,
                            client: client as u32,
                        },
                    );
                }
            }
            Fault::CrashServer { replica, .. } => {
                let node = &mut self.replicas[replica as usize];
                node.alive = false;
                node.epoch += 1;
                node.busy_until = self.now;
                self.monitor.set_live(replica, false);
                self.members.retain(|m| *m != replica);
                self.push_membership();
                self.maybe_enable_writes();
            }
            Fault::RecoverServer { replica, .. } => {
                let src = match self.cfg.protocol {
                    Protocol::Cr | Protocol::Craq => *self.members.last().expect("live member"),
                    Protocol::Pb | Protocol::Vr => self.members[0],
                };
                let mut fresh = Replica::new(replica, self.pcfg.clone());
                let mut out = mem::take(&mut self.out);
                fresh.install_from(&self.replicas[src as usize].r, &mut out);
                let node = &mut self.replicas[replica as usize];
                node.r = fresh;
                node.alive = true;
                node.epoch += 1;
                node.busy_until = self.now;
                self.monitor.set_live(replica, true);
                self.drain(&mut out);
                self.out = out;
                let coord = self.members[0];
                self.replicas[coord as usize].r.note_caught_up(replica);
                self.members.push(replica);
                if matches!(self.cfg.protocol, Protocol::Pb | Protocol::Vr) {
                    self.members.sort_unstable();
                }
                self.push_membership();
            }
            Fault::Partition { .. } => {}
        }
    }

    fn push_membership(&mut self) {
        let members = self.members.clone();
        let mut out = mem::take(&mut self.out);
        for r in members.clone() {
            self.replicas[r as usize]
                .r
                .set_members(self.now, members.clone(), &mut out);
            self.drain(&mut out);
        }
        self.out = out;
        for sw in self.switches.values_mut() {
            sw.st.set_members(members.clone());
            sw.st.set_replica_set(members.clone());
        }
    }

    fn attach_witness(&mut self, from: usize) {
        if !self.cfg.trace {
            return;
        }
        let start = self.trace.len().saturating_sub(WITNESS_LINES);
        let prefix = self.trace[start..].to_vec();
        for v in &mut self.monitor.violations_mut()[from..] {
            v.witness = Some(prefix.clone());
        }
    }

    fn finish(mut self, events: u64) -> RunOutput {
        for (sid, sw) in &self.switches {
            self.monitor
                .check_switch(*sid, sw.st.removed_max(), sw.st.last_committed());
        }
        let report = self.monitor.report();
        self.rec.m.violations = report.violations.len() as u64;
        self.rec.m.net_dropped = self.net.dropped;
        self.rec.m.events = events;
        RunOutput {
            metrics: self.rec.finish(),
            report,
            trace: self.trace,
        }
    }
}
