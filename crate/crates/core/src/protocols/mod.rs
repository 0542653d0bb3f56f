//! Replica-side replication protocols and the single-replica read path.

mod gates;
mod lease;
mod replica;

use serde::{Deserialize, Serialize};

pub use gates::{gate_read_ahead, gate_read_behind, GateDecision};
pub use lease::LeaseState;
pub use replica::Replica;

use crate::net::{Nanos, MICROS};
use crate::switch::NormalReadTarget;
use crate::types::{Message, ObjectId, RequestId, SeqNum, WriteRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Pb,
    Cr,
    Craq,
    Vr,
}

impl Protocol {
    /// Lone replicas of a read-behind protocol may lag the commit point;
    /// those of a read-ahead protocol may be ahead of it.
    pub fn read_behind(self) -> bool {
        matches!(self, Protocol::Vr)
    }

    pub fn normal_read_target(self) -> NormalReadTarget {
        match self {
            Protocol::Pb | Protocol::Vr => NormalReadTarget::First,
            Protocol::Cr => NormalReadTarget::Last,
            Protocol::Craq => NormalReadTarget::Random,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Pb => "pb",
            Protocol::Cr => "cr",
            Protocol::Craq => "craq",
            Protocol::Vr => "vr",
        }
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pb" => Ok(Protocol::Pb),
            "cr" => Ok(Protocol::Cr),
            "craq" => Ok(Protocol::Craq),
            "vr" => Ok(Protocol::Vr),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

/// When the VR leader tells the switch a write is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CompletionDelay {
    /// As soon as a quorum has executed the write.
    Quorum,
    /// Once every live replica has executed the write.
    All,
    /// Quorum, then wait for everyone up to this long after commit.
    Timeout(Nanos),
}

impl std::str::FromStr for CompletionDelay {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quorum" => Ok(CompletionDelay::Quorum),
            "all" => Ok(CompletionDelay::All),
            _ => {
                let ms = s
                    .strip_prefix("ms:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .filter(|v| *v >= 0.0 && v.is_finite())
                    .ok_or_else(|| {
                        format!("completion delay must be quorum, all or ms:<k>, got {s:?}")
                    })?;
                Ok(CompletionDelay::Timeout((ms * 1e6).round() as Nanos))
            }
        }
    }
}

impl TryFrom<String> for CompletionDelay {
    type Error = String;
    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<CompletionDelay> for String {
    fn from(d: CompletionDelay) -> String {
        match d {
            CompletionDelay::Quorum => "quorum".into(),
            CompletionDelay::All => "all".into(),
            CompletionDelay::Timeout(ns) => format!("ms:{}", ns as f64 / 1e6),
        }
    }
}

/// Deliberately broken replica behaviour, used to show the checker fires.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mutations {
    pub read_ahead_gate_off: bool,
    pub read_behind_gate_off: bool,
    pub stale_switch_reads: bool,
}

impl Mutations {
    pub fn named(name: &str) -> Option<Mutations> {
        let mut m = Mutations::default();
        match name {
            "read-ahead-gate-off" => m.read_ahead_gate_off = true,
            "read-behind-gate-off" => m.read_behind_gate_off = true,
            "stale-switch-reads" => m.stale_switch_reads = true,
            _ => return None,
        }
        Some(m)
    }

    pub const NAMES: [&'static str; 3] = [
        "read-ahead-gate-off",
        "read-behind-gate-off",
        "stale-switch-reads",
    ];
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: Protocol,
    /// Replica IDs in protocol order: primary, head or leader first.
    pub replicas: Vec<u32>,
    pub quorum: usize,
    pub retransmit_ns: Nanos,
    pub completion_delay: CompletionDelay,
    /// Count VR commit-acks as riding on the next prepare-ok.
    pub piggyback_commit_ack: bool,
    pub lease_duration_ns: Nanos,
    pub mutations: Mutations,
}

impl ProtocolConfig {
    pub fn new(protocol: Protocol, n: u32) -> Self {
        ProtocolConfig {
            protocol,
            replicas: (0..n).collect(),
            quorum: n as usize / 2 + 1,
            retransmit_ns: 200 * MICROS,
            completion_delay: CompletionDelay::All,
            piggyback_commit_ack: false,
            lease_duration_ns: 1_000 * MICROS,
            mutations: Mutations::default(),
        }
    }

    pub fn read_behind(&self) -> bool {
        self.protocol.read_behind()
    }
}

/// What a replica did that the outside world (checker, metrics) must see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Observation {
    /// The protocol fixed the position of a write in its order.
    Decided(WriteRecord),
    /// A replica applied (or, for VR, executed) log entries up to `index`.
    Applied {
        replica: u32,
        index: u64,
    },
    /// A read was answered from local state.
    Served {
        replica: u32,
        object: ObjectId,
        returned: SeqNum,
        ghost: SeqNum,
        single: bool,
        request: RequestId,
    },
    /// A single-replica read was refused by the lease or a gate.
    GateRejected {
        replica: u32,
        lease: bool,
    },
    CompletionSent {
        replica: u32,
        seq: SeqNum,
    },
    /// A write was discarded because it arrived out of order.
    WriteRejected {
        replica: u32,
        seq: SeqNum,
    },
}

/// Effects produced by one replica step.
#[derive(Debug, Default)]
pub struct Outbox {
    pub msgs: Vec<Message>,
    pub obs: Vec<Observation>,
}

impl Outbox {
    pub fn clear(&mut self) {
        self.msgs.clear();
        self.obs.clear();
    }
}
