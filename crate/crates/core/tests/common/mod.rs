//! Checks shared by the structural suite and the acceptance target. Each
//! returns a description of the first disagreement.

#![allow(dead_code)]

use std::collections::HashMap;

use harmonia::harness::{run, RunConfig};
use harmonia::protocols::{Protocol, ProtocolConfig, Replica};
use harmonia::switch::{InsertOutcome, NormalReadTarget, ReferenceSwitch};
use harmonia::types::{Message, MsgKind, NodeId, ObjectId, RequestId, SeqNum};
use harmonia::{gt, gte, seq_compare, MultiStageTable, SwitchConfig, SwitchState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

/// Random inserts, deletes and searches against a plain map. A `Full`
/// insert must only happen for an absent object and leaves both unchanged.
pub fn table_vs_map(ops: u64, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = MultiStageTable::new(3, 512);
    let mut reference: HashMap<u32, SeqNum> = HashMap::new();
    let mut fulls = 0;
    for i in 0..ops {
        let o = rng.gen_range(0..2_000u32);
        let s = SeqNum::new(1, i + 1);
        match rng.gen_range(0..3) {
            0 => match t.insert(ObjectId(o), s) {
                InsertOutcome::Full => {
                    ensure!(
                        !reference.contains_key(&o),
                        "op {i}: resident object {o} reported full"
                    );
                    fulls += 1;
                }
                InsertOutcome::Updated(_) => ensure!(
                    reference.insert(o, s).is_some(),
                    "op {i}: update of absent {o}"
                ),
                InsertOutcome::Inserted(_) => {
                    ensure!(reference.insert(o, s).is_none(), "op {i}: duplicate {o}")
                }
            },
            1 => ensure!(
                t.delete(ObjectId(o)) == reference.remove(&o).is_some(),
                "op {i}: delete {o}"
            ),
            _ => ensure!(
                t.search(ObjectId(o)) == reference.get(&o).copied(),
                "op {i}: search {o}"
            ),
        }
        ensure!(
            t.len() == reference.len(),
            "op {i}: size {} vs {}",
            t.len(),
            reference.len()
        );
    }
    ensure!(fulls > 0, "table never filled");
    Ok(())
}

fn packet(rng: &mut ChaCha8Rng, objects: u32, max_seq: u64) -> Message {
    let o = ObjectId(rng.gen_range(0..objects));
    match rng.gen_range(0..10) {
        0..=2 => Message::new(MsgKind::Write, NodeId::Client(0), NodeId::Switch(2)).with_object(o),
        3..=4 => Message::new(
            MsgKind::WriteCompletion,
            NodeId::Replica(0),
            NodeId::Switch(2),
        )
        .with_object(o)
        .with_seq(SeqNum::new(
            rng.gen_range(1..=2),
            rng.gen_range(1..=max_seq),
        )),
        _ => Message::new(MsgKind::Read, NodeId::Client(0), NodeId::Switch(2)).with_object(o),
    }
}

/// The table-backed switch and the map-backed transliteration schedule
/// every packet identically while the table has room.
pub fn switch_differential(seeds: u64, steps: u64) -> Check {
    for seed in 0..seeds {
        let cfg = SwitchConfig {
            switch_id: 2,
            stages: 4,
            slots: 4096,
            harmonia: true,
            read_target: NormalReadTarget::Last,
            seed,
        };
        let replicas = vec![0, 1, 2, 3];
        let mut table = SwitchState::new(&cfg, replicas.clone());
        let mut reference = ReferenceSwitch::new(2, replicas, NormalReadTarget::Last, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for step in 0..steps {
            let mut a = packet(&mut rng, 64, step / 3 + 1);
            let mut b = a.clone();
            let (oa, ob) = (table.process_packet(&mut a), reference.process(&mut b));
            ensure!(oa == ob, "seed {seed} step {step}: {oa:?} vs {ob:?}");
            ensure!(a == b, "seed {seed} step {step}: stamped packets differ");
        }
    }
    Ok(())
}

/// Antisymmetry, transitivity, lexicographic order and bottom as minimum
/// over a small exhaustive domain.
pub fn seq_laws() -> Check {
    let dom: Vec<SeqNum> = (0..4)
        .flat_map(|s| (0..5).map(move |c| SeqNum::new(s, c)))
        .collect();
    for &a in &dom {
        ensure!(gte(a, SeqNum::BOTTOM), "{a} below bottom");
        for &b in &dom {
            ensure!(
                seq_compare(a, b) == seq_compare(b, a).reverse(),
                "antisymmetry {a} {b}"
            );
            ensure!(
                seq_compare(a, b) == (a.switch_id, a.counter).cmp(&(b.switch_id, b.counter)),
                "lex {a} {b}"
            );
            ensure!(gt(a, b) == (gte(a, b) && a != b), "strict {a} {b}");
            for &c in &dom {
                ensure!(
                    !(gte(a, b) && gte(b, c)) || gte(a, c),
                    "transitivity {a} {b} {c}"
                );
            }
        }
    }
    Ok(())
}

pub fn write_order_rejection() -> Check {
    let mut primary = Replica::new(0, ProtocolConfig::new(Protocol::Pb, 2));
    let write = |c: u64| {
        Message::new(MsgKind::Write, NodeId::Switch(1), NodeId::Replica(0))
            .with_object(ObjectId(1))
            .with_seq(SeqNum::new(1, c))
            .with_request(RequestId { client: 0, op: c })
            .with_payload(vec![1])
    };
    let mut out = Default::default();
    primary.on_message(0, write(2), &mut out);
    primary.on_message(0, write(1), &mut out);
    primary.on_message(0, write(2), &mut out);
    ensure!(
        primary.log_len() == 1,
        "log holds {} entries",
        primary.log_len()
    );
    Ok(())
}

/// A lightly loaded, loss-free run that drains every in-flight write.
pub fn quiet(protocol: Protocol, replicas: u32) -> RunConfig {
    let mut c = RunConfig {
        protocol,
        replicas,
        duration_ns: 3_000_000,
        warmup_ns: 0,
        drain_ns: 5_000_000,
        ..Default::default()
    };
    c.workload.clients = 2;
    c.workload.write_ratio = 0.5;
    c.workload.num_keys = 100;
    c.retransmit_ns = 1_000_000;
    c
}

/// Per-write message counts: PB sends R-1 updates and R-1 acks, CR
/// forwards R-1 times, and each write yields one reply and one completion.
pub fn message_counts() -> Check {
    for r in [2u32, 3, 5] {
        let out = run(&quiet(Protocol::Pb, r)).map_err(|e| e.to_string())?;
        let (w, m) = (out.report.decided_writes, &out.metrics);
        let k = r as u64 - 1;
        ensure!(w > 50, "only {w} writes");
        for (kind, want) in [
            (MsgKind::StateUpdate, k * w),
            (MsgKind::StateUpdateAck, k * w),
            (MsgKind::WriteCompletion, w),
            (MsgKind::WriteReply, w),
        ] {
            ensure!(
                m.message_count(kind) == want,
                "PB R={r}: {kind:?} {} != {want}",
                m.message_count(kind)
            );
        }
        let out = run(&quiet(Protocol::Cr, r)).map_err(|e| e.to_string())?;
        let (w, m) = (out.report.decided_writes, &out.metrics);
        for (kind, want) in [
            (MsgKind::ChainForward, k * w),
            (MsgKind::WriteCompletion, w),
        ] {
            ensure!(
                m.message_count(kind) == want,
                "CR R={r}: {kind:?} {} != {want}",
                m.message_count(kind)
            );
        }
    }
    Ok(())
}

pub fn determinism() -> Check {
    for p in [Protocol::Pb, Protocol::Cr, Protocol::Vr, Protocol::Craq] {
        let mut c = quiet(p, 3);
        c.trace = true;
        c.net.jitter_ns = 500;
        c.net.drop_prob = 0.01;
        let a = run(&c).map_err(|e| e.to_string())?;
        let b = run(&c).map_err(|e| e.to_string())?;
        ensure!(!a.trace.is_empty(), "{p:?}: empty trace");
        ensure!(
            a.trace.join("\n").as_bytes() == b.trace.join("\n").as_bytes(),
            "{p:?}: traces differ"
        );
        c.seed += 1;
        ensure!(
            run(&c).map_err(|e| e.to_string())?.trace != a.trace,
            "{p:?}: seed ignored"
        );
    }
    Ok(())
}
