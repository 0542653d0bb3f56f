//! Parameter sweeps reproducing the evaluation's experiment families at
//! desk scale. Every sweep returns rows in a fixed order regardless of how
//! many worker threads ran it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::metrics::TimelineBin;
use super::world::{run, RunError, RunOutput};
use crate::net::{Fault, FaultSchedule, Nanos, MICROS, MILLIS};
use crate::protocols::{CompletionDelay, Protocol};
use crate::workload::{KeyDistribution, OpenLoop};

/// One line of an experiment table. Column order is the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub experiment: String,
    pub protocol: String,
    pub harmonia: bool,
    pub replicas: u32,
    pub write_ratio: f64,
    /// Experiment-specific x value: slot count, write rate, and so on.
    pub param: f64,
    pub throughput: f64,
    pub read_throughput: f64,
    pub write_throughput: f64,
    pub p50_us: f64,
    pub p99_us: f64,
    pub dropped_writes: u64,
    pub violations: u64,
    pub seed: u64,
}

impl Row {
    pub fn from_run(experiment: &str, cfg: &RunConfig, param: f64, out: &RunOutput) -> Self {
        let m = &out.metrics;
        Row {
            experiment: experiment.to_string(),
            protocol: cfg.protocol.name().to_string(),
            harmonia: cfg.effective_harmonia(),
            replicas: cfg.replicas,
            write_ratio: cfg.workload.write_ratio,
            param,
            throughput: m.throughput,
            read_throughput: m.read_throughput,
            write_throughput: m.write_throughput,
            p50_us: m.p50_us,
            p99_us: m.p99_us,
            dropped_writes: m.dropped_writes,
            violations: m.violations,
            seed: cfg.seed,
        }
    }
}

/// Knobs shared by all sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub seed: u64,
    pub duration_ns: Nanos,
    pub warmup_ns: Nanos,
    pub num_keys: u32,
    /// Closed-loop clients per replica; enough to saturate the replicas.
    pub clients_per_replica: u32,
    /// Client retry timeout. Saturated replicas queue requests for longer
    /// than the default, so sweeps wait longer before retrying.
    pub client_timeout_ns: Nanos,
    /// Replica retransmission timer, raised for the same reason.
    pub retransmit_ns: Nanos,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            seed: 1,
            duration_ns: 20 * MILLIS,
            warmup_ns: 4 * MILLIS,
            num_keys: 10_000,
            clients_per_replica: 64,
            client_timeout_ns: 2 * MILLIS,
            retransmit_ns: 2 * MILLIS,
        }
    }
}

impl SweepOptions {
    pub fn base(
        &self,
        protocol: Protocol,
        harmonia: bool,
        replicas: u32,
        write_ratio: f64,
    ) -> RunConfig {
        let mut c = RunConfig {
            protocol,
            harmonia,
            replicas,
            seed: self.seed,
            duration_ns: self.duration_ns,
            warmup_ns: self.warmup_ns,
            ..RunConfig::default()
        };
        c.workload.num_keys = self.num_keys;
        c.workload.write_ratio = write_ratio;
        c.workload.clients = self.clients_per_replica * replicas;
        c.workload.timeout_ns = Some(self.client_timeout_ns);
        c.retransmit_ns = self.retransmit_ns;
        c
    }
}

/// Runs every config, in parallel, returning outputs in input order.
pub fn run_all(cfgs: &[RunConfig]) -> Result<Vec<RunOutput>, RunError> {
    cfgs.par_iter().map(run).collect()
}

fn tabulate(experiment: &str, cfgs: Vec<(RunConfig, f64)>) -> Result<Vec<Row>, RunError> {
    tabulate_named(cfgs.into_iter().map(|(c, p)| (experiment, c, p)).collect())
}

fn tabulate_named(cfgs: Vec<(&str, RunConfig, f64)>) -> Result<Vec<Row>, RunError> {
    let outs = cfgs
        .par_iter()
        .map(|(_, c, _)| run(c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cfgs
        .iter()
        .zip(&outs)
        .map(|((e, c, p), o)| Row::from_run(e, c, *p, o))
        .collect())
}

/// Workload mixes of the scalability family.
pub const SCALABILITY_MIXES: [f64; 3] = [0.0, 1.0, 0.05];

/// Throughput against replica count, with and without the fast path.
pub fn scalability(
    opts: &SweepOptions,
    protocols: &[Protocol],
    replicas: &[u32],
    mixes: &[f64],
) -> Result<Vec<Row>, RunError> {
    let mut cfgs = Vec::new();
    for &p in protocols {
        for &wr in mixes {
            for harmonia in [false, true] {
                for &r in replicas {
                    cfgs.push((opts.base(p, harmonia, r, wr), r as f64));
                }
            }
        }
    }
    tabulate("scalability", cfgs)
}

/// Throughput against write ratio with three replicas.
pub fn write_ratio(
    opts: &SweepOptions,
    protocols: &[Protocol],
    ratios: &[f64],
) -> Result<Vec<Row>, RunError> {
    let mut cfgs = Vec::new();
    for &p in protocols {
        let modes: &[bool] = if p == Protocol::Craq {
            &[false]
        } else {
            &[false, true]
        };
        for &harmonia in modes {
            for &wr in ratios {
                cfgs.push((opts.base(p, harmonia, 3, wr), wr));
            }
        }
    }
    tabulate("write_ratio", cfgs)
}

/// Read throughput of closed-loop readers while an open-loop writer
/// offers a fixed write rate; `param` is the offered writes per second.
pub fn read_vs_write(opts: &SweepOptions, write_rates: &[f64]) -> Result<Vec<Row>, RunError> {
    let mut cfgs = Vec::new();
    for (p, harmonia) in [(Protocol::Craq, false), (Protocol::Cr, true)] {
        for &rate in write_rates {
            let mut c = opts.base(p, harmonia, 3, 0.0);
            if rate > 0.0 {
                c.workload.open_loop = Some(OpenLoop {
                    rate_per_sec: rate,
                    write_ratio: 1.0,
                });
            }
            cfgs.push((c, rate));
        }
    }
    tabulate("read_vs_write", cfgs)
}

/// Total throughput against switch table size (`param` is total slots
/// over all stages) under uniform and zipf key popularity.
pub fn memory(
    opts: &SweepOptions,
    slots_per_stage: &[usize],
    write_ratio: f64,
    zipf_theta: f64,
) -> Result<Vec<Row>, RunError> {
    let mut cfgs = Vec::new();
    for (name, dist) in [
        ("memory_uniform", KeyDistribution::Uniform),
        ("memory_zipf", KeyDistribution::Zipf { theta: zipf_theta }),
    ] {
        for &slots in slots_per_stage {
            let mut c = opts.base(Protocol::Cr, true, 3, write_ratio);
            c.workload.distribution = dist;
            c.switch.slots = slots;
            let total = (slots * c.switch.stages) as f64;
            cfgs.push((name, c, total));
        }
    }
    tabulate_named(cfgs)
}

/// Instants of one failover scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailoverPlan {
    pub crash_at_ns: Nanos,
    pub activate_at_ns: Nanos,
    pub duration_ns: Nanos,
    pub lease_duration_ns: Nanos,
    /// Offered writes per second from the open-loop writer.
    pub write_rate: f64,
}

impl Default for FailoverPlan {
    fn default() -> Self {
        FailoverPlan {
            crash_at_ns: 10 * MILLIS,
            activate_at_ns: 15 * MILLIS,
            duration_ns: 40 * MILLIS,
            lease_duration_ns: 10 * MILLIS,
            write_rate: 20_000.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FailoverTimeline {
    pub bin_ns: Nanos,
    pub bins: Vec<TimelineBin>,
    /// Same workload with the fast path off and no failure, for reference.
    pub baseline_bins: Vec<TimelineBin>,
    pub plan: FailoverPlan,
    pub new_switch_writes_enabled_at: Option<Nanos>,
    pub new_switch_first_completion_at: Option<Nanos>,
    pub violations: u64,
}

impl FailoverTimeline {
    /// Operations per second in each bin.
    pub fn rates(bins: &[TimelineBin], bin_ns: Nanos) -> Vec<f64> {
        bins.iter()
            .map(|b| (b.reads + b.writes) as f64 * 1e9 / bin_ns as f64)
            .collect()
    }
}

/// The config used by [`failover`] for the run with a failure.
pub fn failover_config(opts: &SweepOptions, plan: &FailoverPlan, protocol: Protocol) -> RunConfig {
    let mut c = opts.base(protocol, true, 3, 0.0);
    c.duration_ns = plan.duration_ns;
    c.lease_duration_ns = plan.lease_duration_ns;
    c.lease_cut_short = false;
    c.workload.open_loop = Some(OpenLoop {
        rate_per_sec: plan.write_rate,
        write_ratio: 1.0,
    });
    c.faults = FaultSchedule(vec![
        Fault::CrashSwitch {
            at_ns: plan.crash_at_ns,
        },
        Fault::ActivateSwitch {
            at_ns: plan.activate_at_ns,
            switch_id: 2,
        },
    ]);
    c
}

/// Throughput timeline across a switch crash and the activation of a
/// replacement switch.
pub fn failover(
    opts: &SweepOptions,
    plan: &FailoverPlan,
    protocol: Protocol,
) -> Result<FailoverTimeline, RunError> {
    let with_fault = failover_config(opts, plan, protocol);
    let mut baseline = with_fault.clone();
    baseline.harmonia = false;
    baseline.faults = FaultSchedule::default();
    let outs = run_all(&[with_fault.clone(), baseline])?;
    let m = &outs[0].metrics;
    Ok(FailoverTimeline {
        bin_ns: with_fault.bin_ns,
        bins: m.timeline.clone(),
        baseline_bins: outs[1].metrics.timeline.clone(),
        plan: *plan,
        new_switch_writes_enabled_at: m.writes_enabled_at.get(&2).copied(),
        new_switch_first_completion_at: m.first_own_completion_at.get(&2).copied(),
        violations: m.violations,
    })
}

/// A short lossy run with adversarial reordering and a switch failover in
/// the middle. Even seeds crash the old switch first; odd seeds leave it
/// running as a zombie that clients keep using until their route updates.
pub fn fault_injection_config(protocol: Protocol, seed: u64) -> RunConfig {
    let mut c = RunConfig {
        protocol,
        harmonia: true,
        replicas: 3,
        seed,
        duration_ns: 8 * MILLIS,
        warmup_ns: MILLIS,
        route_update_delay_ns: 1_500 * MICROS,
        ..RunConfig::default()
    };
    if protocol.read_behind() {
        c.completion_delay = CompletionDelay::Quorum;
    }
    c.workload.num_keys = 1_000;
    c.workload.write_ratio = 0.05;
    c.workload.clients = 48;
    c.net.jitter_ns = 1_000;
    c.net.drop_prob = 0.01;
    c.net.reorder_window_ns = 5_000;
    c.net.reorder_prob = 0.2;
    let activate = 4 * MILLIS;
    let mut faults = Vec::new();
    if seed.is_multiple_of(2) {
        faults.push(Fault::CrashSwitch {
            at_ns: activate - 500 * MICROS,
        });
    }
    faults.push(Fault::ActivateSwitch {
        at_ns: activate,
        switch_id: 2,
    });
    c.faults = FaultSchedule(faults);
    c
}

/// Named experiment families for the command line.
pub const EXPERIMENTS: [&str; 5] = [
    "scalability",
    "write_ratio",
    "read_vs_write",
    "memory",
    "failover",
];

/// Default x values of each sweep.
pub mod defaults {
    pub const REPLICAS: [u32; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
    pub const WRITE_RATIOS: [f64; 7] = [0.0, 0.05, 0.1, 0.2, 0.4, 0.7, 1.0];
    pub const WRITE_RATES: [f64; 7] = [0.0, 50e3, 100e3, 200e3, 300e3, 400e3, 500e3];
    pub const SLOTS_PER_STAGE: [usize; 10] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 1024];
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> SweepOptions {
        SweepOptions {
            duration_ns: 6 * MILLIS,
            warmup_ns: 2 * MILLIS,
            num_keys: 1000,
            clients_per_replica: 16,
            ..Default::default()
        }
    }

    #[test]
    fn rows_follow_input_order() {
        let rows = scalability(&quick(), &[Protocol::Cr], &[1, 2], &[0.0]).unwrap();
        let keys: Vec<(bool, u32)> = rows.iter().map(|r| (r.harmonia, r.replicas)).collect();
        assert_eq!(keys, vec![(false, 1), (false, 2), (true, 1), (true, 2)]);
        assert!(rows.iter().all(|r| r.violations == 0 && r.throughput > 0.0));
    }

    #[test]
    fn craq_appears_once_per_ratio() {
        let rows = write_ratio(&quick(), &[Protocol::Craq], &[0.0, 0.5]).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| !r.harmonia));
    }
}
