//! The abstract protocol as a state machine over a monotone message set, a
//! shared log and per-replica commit points.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{ObjectId, SeqNum};

/// A write as sent by a switch. `switch == 0` is the bottom write.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct McWrite {
    pub switch: u8,
    pub seq: u8,
    pub item: u8,
}

impl McWrite {
    pub const BOTTOM: McWrite = McWrite {
        switch: 0,
        seq: 0,
        item: 0,
    };

    pub fn is_bottom(self) -> bool {
        self.switch == 0 && self.seq == 0
    }

    pub fn seq_num(self) -> SeqNum {
        SeqNum::new(self.switch as u64, self.seq as u64)
    }

    pub fn object(self) -> ObjectId {
        ObjectId(self.item as u32)
    }

    /// Order on sequence numbers only, switch first.
    pub fn gte(self, other: McWrite) -> bool {
        (self.switch, self.seq) >= (other.switch, other.seq)
    }

    pub fn gt(self, other: McWrite) -> bool {
        (self.switch, self.seq) > (other.switch, other.seq)
    }
}

impl fmt::Display for McWrite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_bottom() {
            write!(f, "⊥")
        } else {
            write!(f, "w{}.{}@d{}", self.switch, self.seq, self.item)
        }
    }
}

fn max_w(ws: impl IntoIterator<Item = McWrite>) -> McWrite {
    ws.into_iter()
        .fold(McWrite::BOTTOM, |a, b| if b.gt(a) { b } else { a })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum McMsg {
    Write(McWrite),
    ProtocolRead {
        item: u8,
        ghost: McWrite,
    },
    HarmoniaRead {
        item: u8,
        switch: u8,
        last_committed: McWrite,
        ghost: McWrite,
    },
    ReadResponse {
        write: McWrite,
        ghost: McWrite,
    },
}

impl fmt::Display for McMsg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McMsg::Write(w) => write!(f, "Write({w})"),
            McMsg::ProtocolRead { item, ghost } => {
                write!(f, "ProtocolRead(d{item}, ghost {ghost})")
            }
            McMsg::HarmoniaRead {
                item,
                switch,
                last_committed,
                ghost,
            } => {
                write!(
                    f,
                    "HarmoniaRead(d{item}, s{switch}, lc {last_committed}, ghost {ghost})"
                )
            }
            McMsg::ReadResponse { write, ghost } => {
                write!(f, "ReadResponse({write}, ghost {ghost})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct McSwitch {
    pub seq: u8,
    /// Pending sequence counter per data item.
    pub dirty: Vec<Option<u8>>,
    pub last_committed: McWrite,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct McState {
    pub messages: BTreeSet<McMsg>,
    /// Index 0 is switch 1.
    pub switches: Vec<McSwitch>,
    pub active_switch: u8,
    pub shared_log: Vec<McWrite>,
    pub commit_points: Vec<u8>,
}

/// Guards that can be deleted to check that the checker notices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct McMutation {
    pub read_ahead_guard_off: bool,
    pub read_behind_guard_off: bool,
    pub switch_guard_off: bool,
}

impl McMutation {
    pub const NAMES: [&'static str; 3] = [
        "read-ahead-gate-off",
        "read-behind-gate-off",
        "stale-switch-reads",
    ];

    pub fn named(name: &str) -> Option<Self> {
        let mut m = McMutation::default();
        match name {
            "read-ahead-gate-off" => m.read_ahead_guard_off = true,
            "read-behind-gate-off" => m.read_behind_guard_off = true,
            "stale-switch-reads" => m.switch_guard_off = true,
            _ => return None,
        }
        Some(m)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum McConfigError {
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error("{0} is limited to 255")]
    TooLarge(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    pub items: u32,
    pub switches: u32,
    pub replicas: u32,
    pub read_behind: bool,
    /// Longest action sequence explored from the initial state.
    pub depth: u32,
    /// Largest per-switch write counter.
    pub seq_bound: u32,
    /// Distinct states after which exploration gives up.
    pub max_states: u64,
    pub mutation: McMutation,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            items: 2,
            switches: 2,
            replicas: 2,
            read_behind: true,
            depth: 12,
            seq_bound: 3,
            max_states: 200_000_000,
            mutation: McMutation::default(),
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<(), McConfigError> {
        for (name, v) in [
            ("items", self.items),
            ("switches", self.switches),
            ("replicas", self.replicas),
            ("seq_bound", self.seq_bound),
        ] {
            if v == 0 {
                return Err(McConfigError::Zero(name));
            }
            if v > 255 {
                return Err(McConfigError::TooLarge(name));
            }
        }
        Ok(())
    }

    pub fn initial(&self) -> McState {
        McState {
            messages: BTreeSet::new(),
            switches: (0..self.switches)
                .map(|_| McSwitch {
                    seq: 0,
                    dirty: vec![None; self.items as usize],
                    last_committed: McWrite::BOTTOM,
                })
                .collect(),
            active_switch: 1,
            shared_log: Vec::new(),
            commit_points: vec![0; self.replicas as usize],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    SendWrite { switch: u8, item: u8 },
    SendRead { switch: u8, item: u8 },
    HandleWrite(McWrite),
    ProcessWriteCompletion(McWrite),
    CommitWrite { replica: u8 },
    HandleProtocolRead(McMsg),
    HandleHarmoniaRead { replica: u8, msg: McMsg },
    SwitchFailover,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::SendWrite { switch, item } => write!(f, "SendWrite(s{switch}, d{item})"),
            Action::SendRead { switch, item } => write!(f, "SendRead(s{switch}, d{item})"),
            Action::HandleWrite(w) => write!(f, "HandleWrite({w})"),
            Action::ProcessWriteCompletion(w) => write!(f, "ProcessWriteCompletion({w})"),
            Action::CommitWrite { replica } => write!(f, "CommitWrite(r{replica})"),
            Action::HandleProtocolRead(m) => write!(f, "HandleProtocolRead({m})"),
            Action::HandleHarmoniaRead { replica, msg } => {
                write!(f, "HandleHarmoniaRead(r{replica}, {msg})")
            }
            Action::SwitchFailover => write!(f, "SwitchFailover"),
        }
    }
}

/// A read response breaking the predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McViolation {
    pub write: McWrite,
    pub ghost: McWrite,
    /// The returned write is older than one already visible.
    pub stale: bool,
    /// The returned write is neither bottom nor committed.
    pub uncommitted: bool,
}

impl McState {
    pub fn committed_len(&self, cfg: &McConfig) -> usize {
        if cfg.read_behind {
            self.shared_log.len()
        } else {
            self.commit_points.iter().copied().min().unwrap_or(0) as usize
        }
    }

    pub fn committed_log<'a>(&'a self, cfg: &McConfig) -> &'a [McWrite] {
        &self.shared_log[..self.committed_len(cfg)]
    }

    fn max_committed_for_in(item: u8, log: &[McWrite]) -> McWrite {
        max_w(log.iter().copied().filter(|w| w.item == item))
    }

    pub fn max_committed_write_for(&self, cfg: &McConfig, item: u8) -> McWrite {
        Self::max_committed_for_in(item, self.committed_log(cfg))
    }

    pub fn max_committed_write(&self, cfg: &McConfig) -> McWrite {
        max_w(self.committed_log(cfg).iter().copied())
    }

    fn switch(&self, s: u8) -> &McSwitch {
        &self.switches[s as usize - 1]
    }

    fn switch_mut(&mut self, s: u8) -> &mut McSwitch {
        &mut self.switches[s as usize - 1]
    }

    /// Ghost for a read of `item` sent now.
    pub fn ghost_for(&self, cfg: &McConfig, item: u8) -> McWrite {
        let returned = self.messages.iter().filter_map(|m| match m {
            McMsg::ReadResponse { write, .. } if !write.is_bottom() && write.item == item => {
                Some(*write)
            }
            _ => None,
        });
        max_w(std::iter::once(self.max_committed_write_for(cfg, item)).chain(returned))
    }

    /// Every action whose guard holds, in a fixed order.
    pub fn enabled_actions(&self, cfg: &McConfig) -> Vec<Action> {
        let mut out = Vec::new();
        for s in 1..=cfg.switches as u8 {
            for d in 0..cfg.items as u8 {
                let a = Action::SendWrite { switch: s, item: d };
                if self.enabled(cfg, &a) {
                    out.push(a);
                }
                out.push(Action::SendRead { switch: s, item: d });
            }
        }
        let logged: BTreeSet<McWrite> = self.shared_log.iter().copied().collect();
        for w in logged {
            let a = Action::ProcessWriteCompletion(w);
            if self.enabled(cfg, &a) {
                out.push(a);
            }
        }
        for m in &self.messages {
            let candidates: Vec<Action> = match *m {
                McMsg::Write(w) => vec![Action::HandleWrite(w)],
                McMsg::ProtocolRead { .. } => vec![Action::HandleProtocolRead(*m)],
                McMsg::HarmoniaRead { .. } => (0..cfg.replicas as u8)
                    .map(|r| Action::HandleHarmoniaRead {
                        replica: r,
                        msg: *m,
                    })
                    .collect(),
                McMsg::ReadResponse { .. } => Vec::new(),
            };
            out.extend(candidates.into_iter().filter(|a| self.enabled(cfg, a)));
        }
        for r in 0..cfg.replicas as u8 {
            let a = Action::CommitWrite { replica: r };
            if self.enabled(cfg, &a) {
                out.push(a);
            }
        }
        if self.enabled(cfg, &Action::SwitchFailover) {
            out.push(Action::SwitchFailover);
        }
        out
    }

    pub fn enabled(&self, cfg: &McConfig, a: &Action) -> bool {
        match *a {
            Action::SendWrite { switch, .. } => {
                switch <= self.active_switch && (self.switch(switch).seq as u32) < cfg.seq_bound
            }
            Action::SendRead { switch, item } => {
                switch as u32 <= cfg.switches && (item as u32) < cfg.items
            }
            Action::HandleWrite(w) => {
                self.messages.contains(&McMsg::Write(w))
                    && self.shared_log.last().is_none_or(|last| w.gte(*last))
            }
            Action::ProcessWriteCompletion(w) => {
                self.shared_log.contains(&w) && self.max_committed_write(cfg).gte(w)
            }
            Action::CommitWrite { replica } => {
                self.shared_log.len() > self.commit_points[replica as usize] as usize
            }
            Action::HandleProtocolRead(m) => {
                matches!(m, McMsg::ProtocolRead { .. }) && self.messages.contains(&m)
            }
            Action::HandleHarmoniaRead { replica, msg } => {
                let McMsg::HarmoniaRead {
                    item,
                    switch,
                    last_committed,
                    ..
                } = msg
                else {
                    return false;
                };
                if !self.messages.contains(&msg) {
                    return false;
                }
                if !cfg.mutation.switch_guard_off && switch != self.active_switch {
                    return false;
                }
                let cp = self.commit_points[replica as usize] as usize;
                if cfg.read_behind {
                    let applied = if cp > 0 {
                        self.shared_log[cp - 1]
                    } else {
                        McWrite::BOTTOM
                    };
                    cfg.mutation.read_behind_guard_off || applied.gte(last_committed)
                } else {
                    let w = Self::max_committed_for_in(item, &self.shared_log[..cp]);
                    cfg.mutation.read_ahead_guard_off || last_committed.gte(w)
                }
            }
            Action::SwitchFailover => (self.active_switch as u32) < cfg.switches,
        }
    }

    /// Successor of an enabled action.
    ///
    /// # Panics
    /// If `a` is not enabled.
    pub fn apply(&self, cfg: &McConfig, a: &Action) -> McState {
        assert!(self.enabled(cfg, a), "action {a} is not enabled");
        let mut n = self.clone();
        match *a {
            Action::SendWrite { switch, item } => {
                let sw = n.switch_mut(switch);
                sw.seq += 1;
                let seq = sw.seq;
                sw.dirty[item as usize] = Some(seq);
                n.messages
                    .insert(McMsg::Write(McWrite { switch, seq, item }));
            }
            Action::SendRead { switch, item } => {
                let sw = self.switch(switch);
                let harmonia =
                    sw.dirty[item as usize].is_none() && sw.last_committed.gt(McWrite::BOTTOM);
                let ghost = self.ghost_for(cfg, item);
                let m = if harmonia {
                    McMsg::HarmoniaRead {
                        item,
                        switch,
                        last_committed: sw.last_committed,
                        ghost,
                    }
                } else {
                    McMsg::ProtocolRead { item, ghost }
                };
                n.messages.insert(m);
            }
            Action::HandleWrite(w) => n.shared_log.push(w),
            Action::ProcessWriteCompletion(w) => {
                let sw = n.switch_mut(w.switch);
                for slot in &mut sw.dirty {
                    if slot.is_some_and(|c| c <= w.seq) {
                        *slot = None;
                    }
                }
                sw.last_committed = max_w([sw.last_committed, w]);
            }
            Action::CommitWrite { replica } => n.commit_points[replica as usize] += 1,
            Action::HandleProtocolRead(m) => {
                let McMsg::ProtocolRead { item, ghost } = m else {
                    unreachable!()
                };
                let write = self.max_committed_write_for(cfg, item);
                n.messages.insert(McMsg::ReadResponse { write, ghost });
            }
            Action::HandleHarmoniaRead { replica, msg } => {
                let McMsg::HarmoniaRead { item, ghost, .. } = msg else {
                    unreachable!()
                };
                let cp = self.commit_points[replica as usize] as usize;
                let write = Self::max_committed_for_in(item, &self.shared_log[..cp]);
                n.messages.insert(McMsg::ReadResponse { write, ghost });
            }
            Action::SwitchFailover => n.active_switch += 1,
        }
        n
    }

    /// The linearizability predicate for one response in this state.
    pub fn judge(&self, cfg: &McConfig, write: McWrite, ghost: McWrite) -> Option<McViolation> {
        let stale = !write.gte(ghost);
        let uncommitted = !write.is_bottom() && !self.committed_log(cfg).contains(&write);
        (stale || uncommitted).then_some(McViolation {
            write,
            ghost,
            stale,
            uncommitted,
        })
    }

    /// The linearizability predicate over every response in the state.
    pub fn check(&self, cfg: &McConfig) -> Result<(), McViolation> {
        for m in &self.messages {
            if let McMsg::ReadResponse { write, ghost } = *m {
                if let Some(v) = self.judge(cfg, write, ghost) {
                    return Err(v);
                }
            }
        }
        Ok(())
    }

    /// Human-readable differences between two states.
    pub fn diff(&self, next: &McState) -> Vec<String> {
        let mut out = Vec::new();
        for m in next.messages.difference(&self.messages) {
            out.push(format!("+ {m}"));
        }
        for (i, (a, b)) in self.switches.iter().zip(&next.switches).enumerate() {
            if a != b {
                let dirty: Vec<String> = b
                    .dirty
                    .iter()
                    .enumerate()
                    .filter_map(|(d, c)| c.map(|c| format!("d{d}:{c}")))
                    .collect();
                out.push(format!(
                    "switch {}: seq {} dirty {{{}}} lc {}",
                    i + 1,
                    b.seq,
                    dirty.join(", "),
                    b.last_committed
                ));
            }
        }
        if self.active_switch != next.active_switch {
            out.push(format!("active switch {}", next.active_switch));
        }
        if self.shared_log != next.shared_log {
            let log: Vec<String> = next.shared_log.iter().map(ToString::to_string).collect();
            out.push(format!("log [{}]", log.join(", ")));
        }
        if self.commit_points != next.commit_points {
            out.push(format!("commit points {:?}", next.commit_points));
        }
        out
    }
}
