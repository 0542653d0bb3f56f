//! Measurements collected during one simulated run.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::net::Nanos;
use crate::types::MsgKind;
use crate::workload::OpKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TimelineBin {
    pub start_ns: Nanos,
    pub reads: u64,
    pub writes: u64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Metrics {
    pub measured_ns: Nanos,
    pub reads_completed: u64,
    pub writes_completed: u64,
    /// Operations per simulated second inside the measurement window.
    pub throughput: f64,
    pub read_throughput: f64,
    pub write_throughput: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    /// `(upper bound in µs, count)`, doubling bucket widths.
    pub latency_histogram: Vec<(u64, u64)>,
    pub timeline: Vec<TimelineBin>,
    pub reads_served: Vec<u64>,
    pub single_reads_served: Vec<u64>,
    pub switch_single_reads: u64,
    pub switch_normal_reads: u64,
    pub single_replica_fraction: f64,
    pub gate_rejections: u64,
    pub lease_rejections: u64,
    pub dirty_occupancy: Vec<(Nanos, usize)>,
    pub max_dirty: usize,
    pub dropped_writes: u64,
    pub writes_disabled_drops: u64,
    pub rejected_writes: u64,
    pub retries: u64,
    pub violations: u64,
    pub messages: BTreeMap<String, u64>,
    pub messages_total: u64,
    pub messages_piggybacked: u64,
    pub net_dropped: u64,
    /// Per switch ID: when it was cleared to send writes.
    pub writes_enabled_at: BTreeMap<u64, Nanos>,
    /// Per switch ID: when it first processed a completion of its own write.
    pub first_own_completion_at: BTreeMap<u64, Nanos>,
    pub events: u64,
}

impl Metrics {
    pub fn message_count(&self, kind: MsgKind) -> u64 {
        self.messages
            .get(&format!("{kind:?}"))
            .copied()
            .unwrap_or(0)
    }

    /// Completed operations per second in each bin overlapping `[from, to)`.
    pub fn rate_between(&self, from: Nanos, to: Nanos, bin_ns: Nanos) -> f64 {
        let bins: Vec<&TimelineBin> = self
            .timeline
            .iter()
            .filter(|b| b.start_ns >= from && b.start_ns + bin_ns <= to)
            .collect();
        if bins.is_empty() {
            return 0.0;
        }
        let ops: u64 = bins.iter().map(|b| b.reads + b.writes).sum();
        ops as f64 / (bins.len() as f64 * bin_ns as f64 / 1e9)
    }
}

/// Accumulates raw samples; [`Recorder::finish`] produces [`Metrics`].
#[derive(Debug, Clone)]
pub struct Recorder {
    pub m: Metrics,
    warmup: Nanos,
    end: Nanos,
    bin_ns: Nanos,
    latencies: Vec<Nanos>,
}

impl Recorder {
    pub fn new(replicas: u32, warmup: Nanos, end: Nanos, bin_ns: Nanos) -> Self {
        let bins = end.div_ceil(bin_ns) as usize;
        let m = Metrics {
            timeline: (0..bins)
                .map(|i| TimelineBin {
                    start_ns: i as Nanos * bin_ns,
                    ..Default::default()
                })
                .collect(),
            reads_served: vec![0; replicas as usize],
            single_reads_served: vec![0; replicas as usize],
            ..Default::default()
        };
        Recorder {
            m,
            warmup,
            end,
            bin_ns,
            latencies: Vec::new(),
        }
    }

    pub fn op_done(&mut self, kind: OpKind, now: Nanos, latency: Nanos) {
        if let Some(bin) = self.m.timeline.get_mut((now / self.bin_ns) as usize) {
            match kind {
                OpKind::Read => bin.reads += 1,
                OpKind::Write => bin.writes += 1,
            }
        }
        if now < self.warmup || now >= self.end {
            return;
        }
        match kind {
            OpKind::Read => self.m.reads_completed += 1,
            OpKind::Write => self.m.writes_completed += 1,
        }
        self.latencies.push(latency);
    }

    pub fn message(&mut self, kind: MsgKind, piggyback: bool) {
        *self.m.messages.entry(format!("{kind:?}")).or_insert(0) += 1;
        self.m.messages_total += 1;
        if piggyback {
            self.m.messages_piggybacked += 1;
        }
    }

    pub fn finish(mut self) -> Metrics {
        let m = &mut self.m;
        m.measured_ns = self.end - self.warmup;
        let secs = m.measured_ns as f64 / 1e9;
        m.read_throughput = m.reads_completed as f64 / secs;
        m.write_throughput = m.writes_completed as f64 / secs;
        m.throughput = m.read_throughput + m.write_throughput;
        let reads = m.switch_single_reads + m.switch_normal_reads;
        m.single_replica_fraction = if reads == 0 {
            0.0
        } else {
            m.switch_single_reads as f64 / reads as f64
        };
        self.latencies.sort_unstable();
        m.p50_us = percentile(&self.latencies, 0.50) as f64 / 1e3;
        m.p99_us = percentile(&self.latencies, 0.99) as f64 / 1e3;
        let mut hist: BTreeMap<u64, u64> = BTreeMap::new();
        for l in &self.latencies {
            let us = (l / 1_000).max(1);
            *hist.entry(us.next_power_of_two()).or_insert(0) += 1;
        }
        m.latency_histogram = hist.into_iter().collect();
        self.m
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[Nanos], p: f64) -> Nanos {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank() {
        let v: Vec<Nanos> = (1..=100).collect();
        assert_eq!(percentile(&v, 0.5), 50);
        assert_eq!(percentile(&v, 0.99), 99);
        assert_eq!(percentile(&[7], 0.99), 7);
        assert_eq!(percentile(&[], 0.5), 0);
    }

    #[test]
    fn window_and_bins() {
        let mut r = Recorder::new(1, 10, 30, 10);
        r.op_done(OpKind::Read, 5, 1_000);
        r.op_done(OpKind::Read, 15, 2_000);
        r.op_done(OpKind::Write, 25, 3_000);
        let m = r.finish();
        assert_eq!((m.reads_completed, m.writes_completed), (1, 1));
        assert_eq!(
            m.timeline
                .iter()
                .map(|b| b.reads + b.writes)
                .collect::<Vec<_>>(),
            vec![1, 1, 1]
        );
        assert_eq!(m.throughput, 2.0 / 20e-9);
        assert_eq!(m.rate_between(10, 30, 10), 2.0 / 20e-9);
    }
}
