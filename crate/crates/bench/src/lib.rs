//! Criterion benchmarks for the switch table, the switch pipeline, whole
//! simulations and the model checker. Run with `cargo bench -p harmonia-bench`.
