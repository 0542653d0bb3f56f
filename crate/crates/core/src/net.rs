//! Deterministic discrete-event plumbing: the event queue, the lossy link
//! model and the fault schedule.
//!
//! Simulated time is an integer count of nanoseconds.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::NodeId;

pub type Nanos = u64;

pub const MICROS: Nanos = 1_000;
pub const MILLIS: Nanos = 1_000_000;
pub const SECONDS: Nanos = 1_000_000_000;

struct Entry<E> {
    at: Nanos,
    tiebreak: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.tiebreak) == (other.at, other.tiebreak)
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.at, self.tiebreak).cmp(&(other.at, other.tiebreak))
    }
}

/// Min-queue of events keyed by `(deliver_time, insertion index)`.
pub struct EventQueue<E> {
    heap: BinaryHeap<Reverse<Entry<E>>>,
    now: Nanos,
    inserted: u64,
    popped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCondition {
    /// Stop before the first event scheduled after this instant.
    Time(Nanos),
    /// Run until no events remain.
    Quiescence,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("event budget of {budget} exhausted at t={now}ns with {pending} events pending")]
pub struct LivelockError {
    pub budget: u64,
    pub now: Nanos,
    pub pending: usize,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: 0,
            inserted: 0,
            popped: 0,
        }
    }

    pub fn now(&self) -> Nanos {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }

    /// Schedules at an absolute time; times in the past are clamped to now.
    pub fn schedule(&mut self, at: Nanos, event: E) {
        let at = at.max(self.now);
        self.heap.push(Reverse(Entry {
            at,
            tiebreak: self.inserted,
            event,
        }));
        self.inserted += 1;
    }

    pub fn schedule_in(&mut self, delay: Nanos, event: E) {
        self.schedule(self.now + delay, event);
    }

    pub fn peek_time(&self) -> Option<Nanos> {
        self.heap.peek().map(|Reverse(e)| e.at)
    }

    pub fn pop(&mut self) -> Option<(Nanos, E)> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.at;
        self.popped += 1;
        Some((e.at, e.event))
    }

    /// Pops and handles events until `stop`, or until the handler returns
    /// `false`. More than `budget` events is treated as a livelock.
    pub fn run_until<F>(
        &mut self,
        stop: StopCondition,
        budget: u64,
        mut handle: F,
    ) -> Result<u64, LivelockError>
    where
        F: FnMut(&mut Self, Nanos, E) -> bool,
    {
        let mut n = 0u64;
        while let Some(next) = self.peek_time() {
            if let StopCondition::Time(t) = stop {
                if next > t {
                    self.now = self.now.max(t);
                    break;
                }
            }
            if n == budget {
                return Err(LivelockError {
                    budget,
                    now: self.now,
                    pending: self.len(),
                });
            }
            let (at, ev) = self.pop().expect("peeked");
            n += 1;
            if !handle(self, at, ev) {
                break;
            }
        }
        if let StopCondition::Time(t) = stop {
            self.now = self.now.max(t.min(self.peek_time().unwrap_or(t)));
        }
        Ok(n)
    }
}

/// Coarse classification of a link by endpoint roles, for per-link loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    ClientSwitch,
    SwitchClient,
    SwitchReplica,
    ReplicaSwitch,
    ReplicaReplica,
    ReplicaClient,
    Control,
}

impl LinkClass {
    pub fn of(from: NodeId, to: NodeId) -> LinkClass {
        use NodeId::*;
        match (from, to) {
            (Client(_), Switch(_)) => LinkClass::ClientSwitch,
            (Switch(_), Client(_)) => LinkClass::SwitchClient,
            (Switch(_), Replica(_)) => LinkClass::SwitchReplica,
            (Replica(_), Switch(_)) => LinkClass::ReplicaSwitch,
            (Replica(_), Replica(_)) => LinkClass::ReplicaReplica,
            (Replica(_), Client(_)) => LinkClass::ReplicaClient,
            _ => LinkClass::Control,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// One-hop latency.
    pub base_delay_ns: Nanos,
    /// Extra latency drawn uniformly from `[0, jitter_ns]`.
    pub jitter_ns: Nanos,
    pub drop_prob: f64,
    /// Per-link-class overrides of `drop_prob`.
    pub link_drop_prob: BTreeMap<LinkClass, f64>,
    pub duplicate_prob: f64,
    /// Window for adversarial reordering; 0 disables it.
    pub reorder_window_ns: Nanos,
    /// Fraction of messages subjected to adversarial reordering.
    pub reorder_prob: f64,
    pub rng_seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            base_delay_ns: 2_500,
            jitter_ns: 0,
            drop_prob: 0.0,
            link_drop_prob: BTreeMap::new(),
            duplicate_prob: 0.0,
            reorder_window_ns: 0,
            reorder_prob: 0.0,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum NetConfigError {
    #[error("{name} must be a probability in [0, 1], got {value}")]
    Probability { name: &'static str, value: f64 },
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), NetConfigError> {
        let check = |name, value: f64| {
            if (0.0..=1.0).contains(&value) {
                Ok(())
            } else {
                Err(NetConfigError::Probability { name, value })
            }
        };
        check("drop_prob", self.drop_prob)?;
        check("duplicate_prob", self.duplicate_prob)?;
        check("reorder_prob", self.reorder_prob)?;
        for p in self.link_drop_prob.values() {
            check("link_drop_prob", *p)?;
        }
        Ok(())
    }

    /// Round trip client -> switch -> replica -> switch -> client.
    pub fn base_rtt(&self) -> Nanos {
        4 * self.base_delay_ns
    }
}

/// Link model: decides how many copies of a packet arrive and when.
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetConfig,
    rng: ChaCha8Rng,
    pub sent: u64,
    pub delivered_copies: u64,
    pub dropped: u64,
    pub duplicated: u64,
}

impl Network {
    pub fn new(cfg: NetConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        Network {
            cfg,
            rng,
            sent: 0,
            delivered_copies: 0,
            dropped: 0,
            duplicated: 0,
        }
    }

    pub fn config(&self) -> &NetConfig {
        &self.cfg
    }

    fn one_delay(&mut self, now: Nanos) -> Nanos {
        let mut d = self.cfg.base_delay_ns;
        if self.cfg.jitter_ns > 0 {
            d += self.rng.gen_range(0..=self.cfg.jitter_ns);
        }
        let w = self.cfg.reorder_window_ns;
        if w > 0 && self.cfg.reorder_prob > 0.0 && self.rng.gen_bool(self.cfg.reorder_prob) {
            // Packets sent later in the same window arrive earlier.
            d += 2 * (w - now % w);
        }
        d
    }

    /// Delivery times for one send: none (dropped), one, or two (duplicated).
    pub fn send(&mut self, now: Nanos, from: NodeId, to: NodeId) -> Vec<Nanos> {
        self.sent += 1;
        let p = *self
            .cfg
            .link_drop_prob
            .get(&LinkClass::of(from, to))
            .unwrap_or(&self.cfg.drop_prob);
        if p > 0.0 && self.rng.gen_bool(p) {
            self.dropped += 1;
            return Vec::new();
        }
        let mut out = vec![now + self.one_delay(now)];
        if self.cfg.duplicate_prob > 0.0 && self.rng.gen_bool(self.cfg.duplicate_prob) {
            self.duplicated += 1;
            out.push(now + self.one_delay(now));
        }
        self.delivered_copies += out.len() as u64;
        out
    }
}

/// One entry of the fault schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Fault {
    /// The active switch stops forwarding anything.
    CrashSwitch {
        at_ns: Nanos,
    },
    /// A new switch with a larger ID takes over. If the previous switch was
    /// not crashed it keeps running for clients that have not yet learned
    /// the new route.
    ActivateSwitch {
        at_ns: Nanos,
        switch_id: u64,
    },
    CrashServer {
        at_ns: Nanos,
        replica: u32,
    },
    RecoverServer {
        at_ns: Nanos,
        replica: u32,
    },
    /// Cuts `nodes` off from everything else during `[at_ns, until_ns)`.
    Partition {
        at_ns: Nanos,
        until_ns: Nanos,
        nodes: Vec<NodeId>,
    },
}

impl Fault {
    pub fn at(&self) -> Nanos {
        match self {
            Fault::CrashSwitch { at_ns }
            | Fault::ActivateSwitch { at_ns, .. }
            | Fault::CrashServer { at_ns, .. }
            | Fault::RecoverServer { at_ns, .. }
            | Fault::Partition { at_ns, .. } => *at_ns,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("switch IDs must strictly increase: {0} after {1}")]
    SwitchIdOrder(u64, u64),
    #[error("crash of the switch at {0}ns but no switch is running")]
    NoSwitchToCrash(Nanos),
    #[error("replica {0} crashed twice without recovering")]
    DoubleCrash(u32),
    #[error("replica {0} recovered without having crashed")]
    RecoverWithoutCrash(u32),
    #[error("replica {0} does not exist")]
    UnknownReplica(u32),
    #[error("partition interval [{0}, {1}) is empty")]
    EmptyPartition(Nanos, Nanos),
}

/// Faults ordered by time; validated against the replica count.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FaultSchedule(pub Vec<Fault>);

impl FaultSchedule {
    pub fn sorted(&self) -> Vec<Fault> {
        let mut v = self.0.clone();
        v.sort_by_key(Fault::at);
        v
    }

    pub fn validate(&self, replicas: u32) -> Result<(), ScheduleError> {
        let mut switch_id = 1u64;
        let mut switch_up = true;
        let mut down: HashSet<u32> = HashSet::new();
        for f in self.sorted() {
            match f {
                Fault::CrashSwitch { at_ns } => {
                    if !switch_up {
                        return Err(ScheduleError::NoSwitchToCrash(at_ns));
                    }
                    switch_up = false;
                }
                Fault::ActivateSwitch { switch_id: id, .. } => {
                    if id <= switch_id {
                        return Err(ScheduleError::SwitchIdOrder(id, switch_id));
                    }
                    switch_id = id;
                    switch_up = true;
                }
                Fault::CrashServer { replica, .. } => {
                    if replica >= replicas {
                        return Err(ScheduleError::UnknownReplica(replica));
                    }
                    if !down.insert(replica) {
                        return Err(ScheduleError::DoubleCrash(replica));
                    }
                }
                Fault::RecoverServer { replica, .. } => {
                    if replica >= replicas {
                        return Err(ScheduleError::UnknownReplica(replica));
                    }
                    if !down.remove(&replica) {
                        return Err(ScheduleError::RecoverWithoutCrash(replica));
                    }
                }
                Fault::Partition {
                    at_ns, until_ns, ..
                } => {
                    if until_ns <= at_ns {
                        return Err(ScheduleError::EmptyPartition(at_ns, until_ns));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(10, "b");
        q.schedule(5, "a");
        q.schedule(10, "c");
        let order: Vec<_> = std::iter::from_fn(|| q.pop()).collect();
        assert_eq!(order, vec![(5, "a"), (10, "b"), (10, "c")]);
        assert_eq!(q.now(), 10);
    }

    #[test]
    fn run_until_time_and_budget() {
        let mut q = EventQueue::new();
        for t in [1, 2, 3, 10] {
            q.schedule(t, t);
        }
        let mut seen = vec![];
        let n = q.run_until(StopCondition::Time(5), 100, |_, _, e| {
            seen.push(e);
            true
        });
        assert_eq!(n, Ok(3));
        assert_eq!(seen, vec![1, 2, 3]);
        assert_eq!(q.now(), 5);

        // An event that reschedules itself forever trips the livelock guard.
        let mut q = EventQueue::new();
        q.schedule(0, ());
        let err = q.run_until(StopCondition::Quiescence, 50, |q, _, _| {
            q.schedule_in(0, ());
            true
        });
        assert_eq!(err.unwrap_err().budget, 50);
    }

    fn net(f: impl FnOnce(&mut NetConfig)) -> Network {
        let mut c = NetConfig::default();
        f(&mut c);
        Network::new(c)
    }

    #[test]
    fn drop_all() {
        let mut n = net(|c| c.drop_prob = 1.0);
        assert!(n.send(0, NodeId::Client(0), NodeId::Switch(1)).is_empty());
    }

    #[test]
    fn exact_delay_without_jitter() {
        let mut n = net(|c| c.base_delay_ns = 700);
        assert_eq!(n.send(100, NodeId::Client(0), NodeId::Switch(1)), vec![800]);
    }

    #[test]
    fn always_duplicate() {
        let mut n = net(|c| c.duplicate_prob = 1.0);
        assert_eq!(n.send(0, NodeId::Replica(0), NodeId::Replica(1)).len(), 2);
    }

    #[test]
    fn link_override() {
        let mut n = net(|c| {
            c.drop_prob = 1.0;
            c.link_drop_prob.insert(LinkClass::ReplicaReplica, 0.0);
        });
        assert_eq!(n.send(0, NodeId::Replica(0), NodeId::Replica(1)).len(), 1);
        assert!(n.send(0, NodeId::Client(0), NodeId::Switch(1)).is_empty());
    }

    #[test]
    fn adversarial_window_reverses_order() {
        let mut n = net(|c| {
            c.reorder_window_ns = 1_000;
            c.reorder_prob = 1.0;
        });
        let a = n.send(2_100, NodeId::Replica(0), NodeId::Replica(1))[0];
        let b = n.send(2_600, NodeId::Replica(0), NodeId::Replica(1))[0];
        assert!(b < a);
    }

    #[test]
    fn conservation_without_loss() {
        let mut n = net(|c| c.jitter_ns = 500);
        for i in 0..1000 {
            n.send(i, NodeId::Client(0), NodeId::Switch(1));
        }
        assert_eq!(n.sent, n.delivered_copies);
    }

    #[test]
    fn config_validation() {
        let c = NetConfig {
            drop_prob: 1.5,
            ..NetConfig::default()
        };
        assert!(c.validate().is_err());
        assert!(NetConfig::default().validate().is_ok());
    }

    #[test]
    fn schedule_validation() {
        let ok = FaultSchedule(vec![
            Fault::CrashSwitch { at_ns: 20 },
            Fault::ActivateSwitch {
                at_ns: 25,
                switch_id: 2,
            },
            Fault::CrashServer {
                at_ns: 5,
                replica: 1,
            },
            Fault::RecoverServer {
                at_ns: 9,
                replica: 1,
            },
        ]);
        assert_eq!(ok.validate(3), Ok(()));
        assert_eq!(FaultSchedule::default().validate(3), Ok(()));
        let bad = FaultSchedule(vec![
            Fault::CrashServer {
                at_ns: 5,
                replica: 1,
            },
            Fault::CrashServer {
                at_ns: 6,
                replica: 1,
            },
        ]);
        assert_eq!(bad.validate(3), Err(ScheduleError::DoubleCrash(1)));
        let bad = FaultSchedule(vec![Fault::ActivateSwitch {
            at_ns: 5,
            switch_id: 1,
        }]);
        assert_eq!(bad.validate(3), Err(ScheduleError::SwitchIdOrder(1, 1)));
        let bad = FaultSchedule(vec![
            Fault::CrashSwitch { at_ns: 1 },
            Fault::CrashSwitch { at_ns: 2 },
        ]);
        assert_eq!(bad.validate(3), Err(ScheduleError::NoSwitchToCrash(2)));
        let bad = FaultSchedule(vec![Fault::RecoverServer {
            at_ns: 1,
            replica: 0,
        }]);
        assert_eq!(bad.validate(3), Err(ScheduleError::RecoverWithoutCrash(0)));
        let bad = FaultSchedule(vec![Fault::Partition {
            at_ns: 3,
            until_ns: 3,
            nodes: vec![],
        }]);
        assert_eq!(bad.validate(3), Err(ScheduleError::EmptyPartition(3, 3)));
    }

    #[test]
    fn schedule_parses_from_toml() {
        #[derive(Deserialize)]
        struct W {
            faults: FaultSchedule,
        }
        let w: W = toml::from_str(
            r#"
            [[faults]]
            kind = "crash_switch"
            at_ns = 20_000_000
            [[faults]]
            kind = "activate_switch"
            at_ns = 25_000_000
            switch_id = 2
            "#,
        )
        .unwrap();
        assert_eq!(w.faults.0.len(), 2);
        assert_eq!(
            w.faults.0[1],
            Fault::ActivateSwitch {
                at_ns: 25_000_000,
                switch_id: 2
            }
        );
    }
}
