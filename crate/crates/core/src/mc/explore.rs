//! Breadth-first exploration with fingerprint deduplication. Each visited
//! state keeps only its parent and the action that reached it, so traces are
//! rebuilt by replay from the initial state.

use std::collections::HashMap;
use std::hash::{DefaultHasher, Hash, Hasher};

use serde::Serialize;

use super::model::{Action, McConfig, McState, McViolation};

#[derive(Debug, Clone, Serialize)]
pub enum McOutcome {
    /// No reachable state within the depth bound breaks the predicate.
    Verified { states: u64, depth: u32 },
    /// Shortest action sequence reaching a violating state.
    Counterexample {
        trace: Vec<Action>,
        violation: McViolation,
        state: Box<McState>,
        states: u64,
    },
    /// The state budget ran out before the depth bound was reached.
    BudgetExhausted { states: u64, depth: u32 },
}

impl McOutcome {
    pub fn is_verified(&self) -> bool {
        matches!(self, McOutcome::Verified { .. })
    }

    pub fn states(&self) -> u64 {
        match *self {
            McOutcome::Verified { states, .. }
            | McOutcome::Counterexample { states, .. }
            | McOutcome::BudgetExhausted { states, .. } => states,
        }
    }
}

/// 128-bit fingerprint of a state's canonical form.
pub fn fingerprint(s: &McState) -> u128 {
    let mut a = DefaultHasher::new();
    s.hash(&mut a);
    let mut b = DefaultHasher::new();
    0xa5u8.hash(&mut b);
    s.hash(&mut b);
    ((a.finish() as u128) << 64) | b.finish() as u128
}

const ROOT: u32 = u32::MAX;

pub fn check(cfg: &McConfig) -> McOutcome {
    let init = cfg.initial();
    let mut parents: Vec<(u32, Option<Action>)> = vec![(ROOT, None)];
    let mut seen: HashMap<u128, u32> = HashMap::new();
    seen.insert(fingerprint(&init), 0);
    if let Err(v) = init.check(cfg) {
        return McOutcome::Counterexample {
            trace: Vec::new(),
            violation: v,
            state: Box::new(init),
            states: 1,
        };
    }
    let mut frontier = vec![(0u32, init)];
    let mut depth = 0;
    while depth < cfg.depth && !frontier.is_empty() {
        let mut next = Vec::new();
        for (id, state) in &frontier {
            for a in state.enabled_actions(cfg) {
                let succ = state.apply(cfg, &a);
                let fp = fingerprint(&succ);
                if seen.contains_key(&fp) {
                    continue;
                }
                let sid = parents.len() as u32;
                seen.insert(fp, sid);
                parents.push((*id, Some(a)));
                if let Err(v) = succ.check(cfg) {
                    return McOutcome::Counterexample {
                        trace: trace_to(&parents, sid),
                        violation: v,
                        state: Box::new(succ),
                        states: parents.len() as u64,
                    };
                }
                if parents.len() as u64 >= cfg.max_states {
                    return McOutcome::BudgetExhausted {
                        states: parents.len() as u64,
                        depth,
                    };
                }
                next.push((sid, succ));
            }
        }
        frontier = next;
        depth += 1;
    }
    McOutcome::Verified {
        states: parents.len() as u64,
        depth,
    }
}

fn trace_to(parents: &[(u32, Option<Action>)], mut id: u32) -> Vec<Action> {
    let mut out = Vec::new();
    while id != ROOT {
        let (p, a) = &parents[id as usize];
        if let Some(a) = a {
            out.push(*a);
        }
        id = *p;
    }
    out.reverse();
    out
}

/// States visited by a trace, starting with the initial one. `None` if some
/// action is not enabled where it is taken.
pub fn replay(cfg: &McConfig, trace: &[Action]) -> Option<Vec<McState>> {
    let mut states = vec![cfg.initial()];
    for a in trace {
        let cur = states.last().expect("nonempty");
        if !cur.enabled(cfg, a) {
            return None;
        }
        states.push(cur.apply(cfg, a));
    }
    Some(states)
}

/// Numbered actions, each followed by what it changed.
pub fn render_trace(cfg: &McConfig, trace: &[Action]) -> String {
    let Some(states) = replay(cfg, trace) else {
        return "trace does not replay\n".to_string();
    };
    let mut out = String::new();
    for (i, a) in trace.iter().enumerate() {
        out.push_str(&format!("{:>3}. {a}\n", i + 1));
        for line in states[i].diff(&states[i + 1]) {
            out.push_str(&format!("       {line}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::model::McMutation;

    fn small(read_behind: bool) -> McConfig {
        McConfig {
            items: 1,
            switches: 2,
            replicas: 2,
            read_behind,
            depth: 8,
            seq_bound: 2,
            ..McConfig::default()
        }
    }

    #[test]
    fn depth_zero_is_trivially_verified() {
        let cfg = McConfig {
            depth: 0,
            ..McConfig::default()
        };
        assert!(matches!(
            check(&cfg),
            McOutcome::Verified {
                states: 1,
                depth: 0
            }
        ));
    }

    #[test]
    fn small_models_verify() {
        for rb in [false, true] {
            let out = check(&small(rb));
            assert!(out.is_verified(), "{out:?}");
        }
    }

    #[test]
    fn mutations_yield_replayable_counterexamples() {
        for (name, rb) in [
            ("read-ahead-gate-off", false),
            ("read-behind-gate-off", true),
            ("stale-switch-reads", true),
        ] {
            let cfg = McConfig {
                mutation: McMutation::named(name).unwrap(),
                depth: 12,
                ..small(rb)
            };
            let McOutcome::Counterexample {
                trace,
                violation,
                state,
                ..
            } = check(&cfg)
            else {
                panic!("{name} not caught");
            };
            let states = replay(&cfg, &trace).expect("replays");
            assert_eq!(states.last().unwrap(), &*state);
            assert_eq!(state.check(&cfg), Err(violation));
            assert!(states[..states.len() - 1]
                .iter()
                .all(|s| s.check(&cfg).is_ok()));
            assert!(render_trace(&cfg, &trace).contains("HandleHarmoniaRead"));
        }
    }

    #[test]
    fn budget_is_reported() {
        let cfg = McConfig {
            max_states: 10,
            ..small(true)
        };
        assert!(matches!(check(&cfg), McOutcome::BudgetExhausted { .. }));
    }

    #[test]
    fn fingerprint_tracks_equality() {
        let cfg = small(true);
        let a = cfg
            .initial()
            .apply(&cfg, &Action::SendWrite { switch: 1, item: 0 });
        let b = cfg
            .initial()
            .apply(&cfg, &Action::SendWrite { switch: 1, item: 0 });
        assert_eq!(fingerprint(&a), fingerprint(&b));
        assert_ne!(fingerprint(&a), fingerprint(&cfg.initial()));
    }
}
