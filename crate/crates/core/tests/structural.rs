mod common;

use harmonia::types::SeqNum;
use harmonia::{gt, gte, seq_compare};
use proptest::prelude::*;

#[test]
fn table_matches_map_over_many_ops() {
    common::table_vs_map(100_000, 11).unwrap();
}

#[test]
fn table_switch_matches_unbounded_reference() {
    common::switch_differential(20, 5_000).unwrap();
}

#[test]
fn seq_order_laws_hold_exhaustively() {
    common::seq_laws().unwrap();
}

fn seq() -> impl Strategy<Value = SeqNum> {
    (0u64..1 << 20, 0u64..1 << 40).prop_map(|(s, c)| SeqNum::new(s, c))
}

proptest! {
    #[test]
    fn seq_order_is_total_and_lexicographic(a in seq(), b in seq(), c in seq()) {
        prop_assert_eq!(seq_compare(a, b), seq_compare(b, a).reverse());
        prop_assert_eq!(seq_compare(a, b), (a.switch_id, a.counter).cmp(&(b.switch_id, b.counter)));
        if gte(a, b) && gte(b, c) {
            prop_assert!(gte(a, c));
        }
        prop_assert_eq!(gt(a, b), gte(a, b) && a != b);
    }
}

#[test]
fn primary_rejects_out_of_order_writes() {
    common::write_order_rejection().unwrap();
}

#[test]
fn loss_free_message_counts() {
    common::message_counts().unwrap();
}

#[test]
fn identical_seeds_give_identical_traces() {
    common::determinism().unwrap();
}
