//! Multi-stage hash table holding the dirty set.
//!
//! Each stage is a register array of `m` slots with its own hash function.
//! Every operation probes exactly one slot per stage, which is all a switch
//! pipeline can afford at line rate.

use serde::{Deserialize, Serialize};

use crate::types::{ObjectId, SeqNum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InsertOutcome {
    Inserted(usize),
    Updated(usize),
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Slot {
    object: ObjectId,
    seq: SeqNum,
}

/// murmur3 finalizer.
fn fmix32(mut h: u32) -> u32 {
    h ^= h >> 16;
    h = h.wrapping_mul(0x85eb_ca6b);
    h ^= h >> 13;
    h = h.wrapping_mul(0xc2b2_ae35);
    h ^= h >> 16;
    h
}

/// Per-stage seed: the stage index spread by the 32-bit golden ratio.
fn stage_seed(stage: usize) -> u32 {
    (stage as u32).wrapping_add(1).wrapping_mul(0x9e37_79b9)
}

/// Slot index of `object` in `stage` for a table with `slots` slots per stage.
pub fn stage_hash(stage: usize, object: ObjectId, slots: usize) -> usize {
    (fmix32(object.0 ^ stage_seed(stage)) as usize) % slots
}

#[derive(Debug, Clone)]
pub struct MultiStageTable {
    stages: Vec<Vec<Option<Slot>>>,
    slots: usize,
    occupied: usize,
    probes: u64,
}

impl MultiStageTable {
    /// # Panics
    /// If either dimension is zero.
    pub fn new(stages: usize, slots: usize) -> Self {
        assert!(
            stages > 0 && slots > 0,
            "table needs at least one stage and one slot"
        );
        MultiStageTable {
            stages: vec![vec![None; slots]; stages],
            slots,
            occupied: 0,
            probes: 0,
        }
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn slots_per_stage(&self) -> usize {
        self.slots
    }

    pub fn capacity(&self) -> usize {
        self.stages.len() * self.slots
    }

    pub fn len(&self) -> usize {
        self.occupied
    }

    pub fn is_empty(&self) -> bool {
        self.occupied == 0
    }

    /// Total slots touched so far; grows by exactly `num_stages()` per operation.
    pub fn probe_count(&self) -> u64 {
        self.probes
    }

    /// Visits the candidate slot of every stage, in stage order.
    fn probe(&mut self, object: ObjectId) -> Vec<(usize, usize)> {
        self.probes += self.stages.len() as u64;
        (0..self.stages.len())
            .map(|s| (s, stage_hash(s, object, self.slots)))
            .collect()
    }

    pub fn insert(&mut self, object: ObjectId, seq: SeqNum) -> InsertOutcome {
        let cand = self.probe(object);
        let mut first_empty = None;
        for &(stage, idx) in &cand {
            match &mut self.stages[stage][idx] {
                Some(slot) if slot.object == object => {
                    slot.seq = seq;
                    return InsertOutcome::Updated(stage);
                }
                None if first_empty.is_none() => first_empty = Some((stage, idx)),
                _ => {}
            }
        }
        match first_empty {
            Some((stage, idx)) => {
                self.stages[stage][idx] = Some(Slot { object, seq });
                self.occupied += 1;
                InsertOutcome::Inserted(stage)
            }
            None => InsertOutcome::Full,
        }
    }

    pub fn search(&mut self, object: ObjectId) -> Option<SeqNum> {
        let cand = self.probe(object);
        cand.into_iter()
            .find_map(|(stage, idx)| match self.stages[stage][idx] {
                Some(slot) if slot.object == object => Some(slot.seq),
                _ => None,
            })
    }

    pub fn delete(&mut self, object: ObjectId) -> bool {
        let cand = self.probe(object);
        for (stage, idx) in cand {
            if matches!(self.stages[stage][idx], Some(slot) if slot.object == object) {
                self.stages[stage][idx] = None;
                self.occupied -= 1;
                return true;
            }
        }
        false
    }

    /// Removes every entry whose sequence number is `<= bound`. This is the
    /// control-plane sweep, so it walks the whole table and is not counted
    /// against the probe budget.
    pub fn retain_above(&mut self, bound: SeqNum) -> Vec<(ObjectId, SeqNum)> {
        let mut removed = Vec::new();
        for stage in &mut self.stages {
            for slot in stage.iter_mut() {
                if let Some(s) = *slot {
                    if s.seq <= bound {
                        removed.push((s.object, s.seq));
                        *slot = None;
                    }
                }
            }
        }
        self.occupied -= removed.len();
        removed
    }

    pub fn entries(&self) -> impl Iterator<Item = (ObjectId, SeqNum)> + '_ {
        self.stages
            .iter()
            .flatten()
            .filter_map(|s| s.map(|s| (s.object, s.seq)))
    }

    pub fn clear(&mut self) {
        for stage in &mut self.stages {
            stage.iter_mut().for_each(|s| *s = None);
        }
        self.occupied = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn s(c: u64) -> SeqNum {
        SeqNum::new(1, c)
    }

    /// Brute-force search for blockers: the k-th blocker shares the target's
    /// candidate slots in stages 0..=k, so inserting them in order pins the
    /// k-th one into stage k.
    fn colliding(stages: usize, slots: usize, target: ObjectId, count: usize) -> Vec<ObjectId> {
        let want: Vec<usize> = (0..stages)
            .map(|st| stage_hash(st, target, slots))
            .collect();
        (0..count)
            .map(|k| {
                (0u32..)
                    .map(ObjectId)
                    .find(|o| {
                        *o != target && (0..=k).all(|st| stage_hash(st, *o, slots) == want[st])
                    })
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn first_insert_lands_in_stage_zero() {
        let mut t = MultiStageTable::new(3, 16);
        assert_eq!(t.insert(ObjectId(7), s(1)), InsertOutcome::Inserted(0));
        assert_eq!(t.search(ObjectId(7)), Some(s(1)));
    }

    #[test]
    fn all_candidates_taken_is_full() {
        let (stages, slots) = (3, 8);
        let target = ObjectId(424242);
        let blockers = colliding(stages, slots, target, stages);
        let mut t = MultiStageTable::new(stages, slots);
        for (i, b) in blockers.iter().enumerate() {
            assert!(matches!(
                t.insert(*b, s(i as u64 + 1)),
                InsertOutcome::Inserted(_)
            ));
        }
        // Each blocker occupies the target's candidate slot in a distinct stage.
        assert_eq!(t.insert(target, s(9)), InsertOutcome::Full);
        assert_eq!(t.search(target), None);
    }

    #[test]
    fn rewrite_of_resident_object_updates_in_place() {
        let mut t = MultiStageTable::new(3, 8);
        let o = ObjectId(3);
        assert_eq!(t.insert(o, s(3)), InsertOutcome::Inserted(0));
        assert_eq!(t.insert(o, s(4)), InsertOutcome::Updated(0));
        assert_eq!(t.len(), 1);
        assert_eq!(t.search(o), Some(s(4)));
    }

    #[test]
    fn update_lands_where_object_lives_even_if_earlier_stage_freed() {
        let (stages, slots) = (3, 8);
        let target = ObjectId(99);
        let blockers = colliding(stages, slots, target, 1);
        let mut t = MultiStageTable::new(stages, slots);
        t.insert(blockers[0], s(1));
        let first = t.insert(target, s(2));
        assert!(matches!(first, InsertOutcome::Inserted(st) if st > 0));
        t.delete(blockers[0]);
        // The slot in the earlier stage is free again, but the object must
        // not get a second entry.
        assert!(matches!(t.insert(target, s(3)), InsertOutcome::Updated(_)));
        assert_eq!(t.len(), 1);
        assert!(t.delete(target));
        assert_eq!(t.search(target), None);
    }

    #[test]
    fn search_and_delete_basics() {
        let mut t = MultiStageTable::new(2, 4);
        assert_eq!(t.search(ObjectId(1)), None);
        assert!(!t.delete(ObjectId(1)));
        t.insert(ObjectId(1), s(1));
        assert!(t.delete(ObjectId(1)));
        assert_eq!(t.search(ObjectId(1)), None);
        assert!(t.is_empty());
    }

    #[test]
    fn retain_above_removes_committed_entries() {
        let mut t = MultiStageTable::new(3, 64);
        t.insert(ObjectId(1), s(3));
        t.insert(ObjectId(2), s(9));
        let removed = t.retain_above(s(5));
        assert_eq!(removed, vec![(ObjectId(1), s(3))]);
        assert_eq!(t.search(ObjectId(2)), Some(s(9)));
        assert_eq!(t.retain_above(s(100)).len(), 1);
        assert!(t.is_empty());
        assert!(t.retain_above(s(100)).is_empty());
    }

    #[test]
    fn probe_budget_is_one_slot_per_stage() {
        let mut t = MultiStageTable::new(4, 32);
        let before = t.probe_count();
        t.insert(ObjectId(5), s(1));
        t.search(ObjectId(6));
        t.delete(ObjectId(5));
        assert_eq!(t.probe_count() - before, 3 * 4);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u32, u64),
        Delete(u32),
        Search(u32),
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..40, 1u64..100).prop_map(|(o, c)| Op::Insert(o, c)),
            (0u32..40).prop_map(Op::Delete),
            (0u32..40).prop_map(Op::Search),
        ]
    }

    proptest! {
        // Until the first `Full`, the table answers exactly like a map; deletes
        // never disturb colliding neighbours.
        #[test]
        fn matches_reference_map(ops in proptest::collection::vec(arb_op(), 1..300)) {
            let mut t = MultiStageTable::new(3, 8);
            let mut reference: HashMap<u32, SeqNum> = HashMap::new();
            for op in ops {
                match op {
                    Op::Insert(o, c) => {
                        let out = t.insert(ObjectId(o), s(c));
                        if out == InsertOutcome::Full {
                            prop_assert!(!reference.contains_key(&o));
                            break;
                        }
                        prop_assert_eq!(matches!(out, InsertOutcome::Updated(_)), reference.contains_key(&o));
                        reference.insert(o, s(c));
                    }
                    Op::Delete(o) => {
                        prop_assert_eq!(t.delete(ObjectId(o)), reference.remove(&o).is_some());
                    }
                    Op::Search(o) => {
                        prop_assert_eq!(t.search(ObjectId(o)), reference.get(&o).copied());
                    }
                }
                prop_assert_eq!(t.len(), reference.len());
            }
        }
    }
}
