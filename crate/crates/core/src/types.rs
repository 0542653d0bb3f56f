//! Shared domain types: sequence numbers, object identifiers, write records
//! and the message envelope exchanged between clients, switches and replicas.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A write sequence number augmented with the ID of the switch that
/// assigned it. Ordered lexicographically, switch ID first.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct SeqNum {
    pub switch_id: u64,
    pub counter: u64,
}

impl SeqNum {
    /// The value smaller than every write any switch can assign.
    pub const BOTTOM: SeqNum = SeqNum {
        switch_id: 0,
        counter: 0,
    };

    pub const fn new(switch_id: u64, counter: u64) -> Self {
        SeqNum { switch_id, counter }
    }

    pub fn is_bottom(&self) -> bool {
        *self == Self::BOTTOM
    }
}

impl fmt::Display for SeqNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.switch_id, self.counter)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("malformed sequence number {0:?}, expected \"sid:ctr\"")]
pub struct ParseSeqError(String);

impl FromStr for SeqNum {
    type Err = ParseSeqError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (sid, ctr) = s
            .split_once(':')
            .ok_or_else(|| ParseSeqError(s.to_string()))?;
        let switch_id = sid.parse().map_err(|_| ParseSeqError(s.to_string()))?;
        let counter = ctr.parse().map_err(|_| ParseSeqError(s.to_string()))?;
        Ok(SeqNum { switch_id, counter })
    }
}

/// Three-way comparison of sequence numbers.
pub fn seq_compare(a: SeqNum, b: SeqNum) -> Ordering {
    a.switch_id
        .cmp(&b.switch_id)
        .then(a.counter.cmp(&b.counter))
}

/// `a >= b` in sequence-number order.
pub fn gte(a: SeqNum, b: SeqNum) -> bool {
    seq_compare(a, b) != Ordering::Less
}

/// `a > b` in sequence-number order.
pub fn gt(a: SeqNum, b: SeqNum) -> bool {
    seq_compare(a, b) == Ordering::Greater
}

/// Fixed-width object identifier used for conflict detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(pub u32);

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "obj{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("object key must not be empty")]
    Empty,
}

const FNV32_OFFSET: u32 = 0x811c_9dc5;
const FNV32_PRIME: u32 = 0x0100_0193;

/// Hashes a variable-length key to a fixed-width [`ObjectId`] with 32-bit
/// FNV-1a. Collisions can only make an object look contended.
pub fn hash_object_id(key: &[u8]) -> Result<ObjectId, KeyError> {
    if key.is_empty() {
        return Err(KeyError::Empty);
    }
    let h = key.iter().fold(FNV32_OFFSET, |h, b| {
        (h ^ u32::from(*b)).wrapping_mul(FNV32_PRIME)
    });
    Ok(ObjectId(h))
}

/// One write: the unit of the replicated log.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WriteRecord {
    pub seq: SeqNum,
    pub object: ObjectId,
    pub value: Vec<u8>,
}

/// Simulation node address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Client(u32),
    /// A switch incarnation, addressed by its switch ID.
    Switch(u64),
    Replica(u32),
    /// The operator / configuration service.
    Controller,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Client(c) => write!(f, "c{c}"),
            NodeId::Switch(s) => write!(f, "sw{s}"),
            NodeId::Replica(r) => write!(f, "r{r}"),
            NodeId::Controller => write!(f, "ctl"),
        }
    }
}

/// Identifies one client operation across retries.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize,
)]
pub struct RequestId {
    pub client: u32,
    pub op: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MsgKind {
    Read,
    Write,
    WriteCompletion,
    ReadReply,
    WriteReply,
    Prepare,
    PrepareOk,
    Commit,
    CommitAck,
    ChainForward,
    ChainAck,
    StateUpdate,
    StateUpdateAck,
    CraqDirtyMark,
    CraqCommit,
    LeaseGrant,
    LeaseRevoke,
}

impl MsgKind {
    pub const ALL: [MsgKind; 17] = [
        MsgKind::Read,
        MsgKind::Write,
        MsgKind::WriteCompletion,
        MsgKind::ReadReply,
        MsgKind::WriteReply,
        MsgKind::Prepare,
        MsgKind::PrepareOk,
        MsgKind::Commit,
        MsgKind::CommitAck,
        MsgKind::ChainForward,
        MsgKind::ChainAck,
        MsgKind::StateUpdate,
        MsgKind::StateUpdateAck,
        MsgKind::CraqDirtyMark,
        MsgKind::CraqCommit,
        MsgKind::LeaseGrant,
        MsgKind::LeaseRevoke,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// The envelope carried by every simulated packet.
///
/// Fields that do not apply to a kind keep their defaults. `ghost_last_response`
/// is checker metadata: it is copied along but protocol code never branches on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub kind: MsgKind,
    pub src: NodeId,
    pub dst: NodeId,
    pub object: ObjectId,
    pub seq: SeqNum,
    /// Switch commit point stamped on single-replica reads, or a commit
    /// index carrier for protocol messages.
    pub last_committed: SeqNum,
    /// Set by the switch on reads it routes to a single replica.
    pub single_replica: bool,
    /// Switch that stamped a read, or the switch a lease message refers to.
    pub switch_id: u64,
    /// Protocol log position (1-based); for acks, the cumulative position.
    pub index: u64,
    /// Lease expiry carried by `LeaseGrant`, in simulated nanoseconds.
    pub expiry: u64,
    pub request: RequestId,
    pub payload: Vec<u8>,
    /// Marks a completion that rides on a write reply, or a commit-ack that
    /// rides on the next prepare-ok.
    pub piggyback: bool,
    pub ghost_last_response: SeqNum,
}

impl Message {
    pub fn new(kind: MsgKind, src: NodeId, dst: NodeId) -> Self {
        Message {
            kind,
            src,
            dst,
            object: ObjectId(0),
            seq: SeqNum::BOTTOM,
            last_committed: SeqNum::BOTTOM,
            single_replica: false,
            switch_id: 0,
            index: 0,
            expiry: 0,
            request: RequestId::default(),
            payload: Vec::new(),
            piggyback: false,
            ghost_last_response: SeqNum::BOTTOM,
        }
    }

    pub fn with_object(mut self, object: ObjectId) -> Self {
        self.object = object;
        self
    }

    pub fn with_seq(mut self, seq: SeqNum) -> Self {
        self.seq = seq;
        self
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    pub fn with_request(mut self, request: RequestId) -> Self {
        self.request = request;
        self
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = payload;
        self
    }

    /// Readdresses a message, keeping every other field.
    pub fn redirect(mut self, src: NodeId, dst: NodeId) -> Self {
        self.src = src;
        self.dst = dst;
        self
    }

    pub fn write_record(&self) -> WriteRecord {
        WriteRecord {
            seq: self.seq,
            object: self.object,
            value: self.payload.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compare_examples() {
        assert_eq!(
            seq_compare(SeqNum::new(2, 1), SeqNum::new(1, 99)),
            Ordering::Greater
        );
        assert_eq!(
            seq_compare(SeqNum::new(0, 0), SeqNum::new(0, 0)),
            Ordering::Equal
        );
        assert_eq!(
            seq_compare(SeqNum::new(1, 7), SeqNum::new(1, 8)),
            Ordering::Less
        );
        assert!(gte(SeqNum::new(1, 8), SeqNum::new(1, 8)));
        assert!(!gt(SeqNum::new(1, 8), SeqNum::new(1, 8)));
    }

    #[test]
    fn text_rendering() {
        assert_eq!(SeqNum::new(1, 42).to_string(), "1:42");
        assert_eq!("1:42".parse::<SeqNum>().unwrap(), SeqNum::new(1, 42));
        assert!("142".parse::<SeqNum>().is_err());
        assert!("a:1".parse::<SeqNum>().is_err());
    }

    #[test]
    fn hash_is_deterministic_and_rejects_empty() {
        let a = hash_object_id(b"user:1001").unwrap();
        assert_eq!(a, hash_object_id(b"user:1001").unwrap());
        assert_ne!(a, hash_object_id(b"user:1002").unwrap());
        assert_eq!(hash_object_id(b""), Err(KeyError::Empty));
        // Published FNV-1a 32-bit test vector.
        assert_eq!(hash_object_id(b"a").unwrap(), ObjectId(0xe40c_292c));
    }

    fn arb_seq() -> impl Strategy<Value = SeqNum> {
        (0u64..4, 0u64..6).prop_map(|(s, c)| SeqNum::new(s, c))
    }

    proptest! {
        #[test]
        fn order_laws(a in arb_seq(), b in arb_seq(), c in arb_seq()) {
            // antisymmetry
            prop_assert_eq!(seq_compare(a, b), seq_compare(b, a).reverse());
            if seq_compare(a, b) == Ordering::Equal { prop_assert_eq!(a, b); }
            // transitivity
            if gte(a, b) && gte(b, c) { prop_assert!(gte(a, c)); }
            // totality
            prop_assert!(gte(a, b) || gte(b, a));
            // agrees with the derived Ord
            prop_assert_eq!(seq_compare(a, b), a.cmp(&b));
        }

        #[test]
        fn bottom_is_minimum(s in 1u64..u64::MAX, c in any::<u64>()) {
            prop_assert!(gte(SeqNum::new(s, c), SeqNum::BOTTOM));
            prop_assert!(gt(SeqNum::new(s, c), SeqNum::BOTTOM));
        }

        #[test]
        fn display_parse_roundtrip(s in any::<u64>(), c in any::<u64>()) {
            let seq = SeqNum::new(s, c);
            prop_assert_eq!(seq.to_string().parse::<SeqNum>().unwrap(), seq);
        }
    }
}
