use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use harmonia::harness::emit::{series_of, write_failover, write_gnuplot, write_rows, write_run};
use harmonia::harness::experiments::{
    self, defaults, FailoverPlan, FailoverTimeline, Row, SweepOptions,
};
use harmonia::harness::{run, RunConfig};
use harmonia::mc::{self, McConfig, McMutation, McOutcome};
use harmonia::protocols::{Mutations, Protocol};
use harmonia::switch::{capacity, CapacityParams};

/// Exit status when a checker or model checker finds a violation.
const VIOLATION: u8 = 2;
/// Exit status when the model checker runs out of state budget.
const BUDGET: u8 = 3;

#[derive(Parser)]
#[command(name = "sim", about = "In-network read scheduling simulator", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one simulation described by a TOML config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the default run config as TOML.
    DefaultConfig,
    /// Run one experiment family and write its table.
    Sweep {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(EXPERIMENT_NAMES))]
        experiment: String,
        #[arg(long, default_value = "results")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Simulated duration of each run in milliseconds.
        #[arg(long)]
        duration_ms: Option<u64>,
        #[arg(long)]
        clients_per_replica: Option<u32>,
        /// Comma-separated protocols, where the experiment takes a list.
        #[arg(long, value_delimiter = ',')]
        protocols: Option<Vec<Protocol>>,
        /// Comma-separated replica counts for the scalability family.
        #[arg(long, value_delimiter = ',')]
        replicas: Option<Vec<u32>>,
        /// Seeds for the fault-injection family.
        #[arg(long, default_value_t = 200)]
        seeds: u64,
        /// Named protocol mutation for the fault-injection family.
        #[arg(long)]
        mutate: Option<String>,
    },
    /// Explore the abstract protocol exhaustively up to a depth bound.
    Check {
        #[arg(long, default_value_t = 2)]
        items: u32,
        #[arg(long, default_value_t = 2)]
        replicas: u32,
        #[arg(long, default_value_t = 2)]
        switches: u32,
        #[arg(long, value_enum, default_value_t = Mode::ReadBehind)]
        mode: Mode,
        #[arg(long, default_value_t = 12)]
        depth: u32,
        #[arg(long, default_value_t = 3)]
        seq_bound: u32,
        #[arg(long, default_value_t = 200_000_000)]
        max_states: u64,
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(McMutation::NAMES))]
        mutate: Option<String>,
    },
    /// Dirty-set table sizing arithmetic.
    Capacity {
        #[arg(long)]
        stages: u64,
        #[arg(long)]
        slots: u64,
        #[arg(long)]
        util: f64,
        #[arg(long)]
        write_ms: f64,
        #[arg(long)]
        write_ratio: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    ReadAhead,
    ReadBehind,
}

const EXPERIMENT_NAMES: [&str; 6] = [
    "scalability",
    "write_ratio",
    "read_vs_write",
    "memory",
    "failover",
    "faults",
];

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.cmd {
        Cmd::Run { config, out, seed } => cmd_run(&config, out.as_deref(), seed),
        Cmd::DefaultConfig => {
            print!("{}", RunConfig::default().to_toml());
            Ok(0)
        }
        Cmd::Sweep {
            experiment,
            out,
            seed,
            duration_ms,
            clients_per_replica,
            protocols,
            replicas,
            seeds,
            mutate,
        } => {
            let mut opts = SweepOptions {
                seed,
                ..SweepOptions::default()
            };
            if let Some(ms) = duration_ms {
                opts.duration_ns = ms * 1_000_000;
                opts.warmup_ns = opts.warmup_ns.min(opts.duration_ns / 5);
            }
            if let Some(c) = clients_per_replica {
                opts.clients_per_replica = c;
            }
            let sweep = Sweep {
                opts,
                protocols,
                replicas,
                seeds,
                mutate,
            };
            cmd_sweep(&experiment, &out, &sweep)
        }
        Cmd::Check {
            items,
            replicas,
            switches,
            mode,
            depth,
            seq_bound,
            max_states,
            mutate,
        } => {
            let mutation = mutate
                .as_deref()
                .and_then(McMutation::named)
                .unwrap_or_default();
            let cfg = McConfig {
                items,
                switches,
                replicas,
                read_behind: matches!(mode, Mode::ReadBehind),
                depth,
                seq_bound,
                max_states,
                mutation,
            };
            cmd_check(&cfg)
        }
        Cmd::Capacity {
            stages,
            slots,
            util,
            write_ms,
            write_ratio,
        } => {
            let c = capacity(&CapacityParams::new(
                stages,
                slots,
                util,
                write_ms / 1e3,
                write_ratio,
            ))?;
            println!("concurrent writes  {}", c.concurrent_writes);
            println!("writes per second  {}", c.writes_per_sec);
            println!("total per second   {}", c.total_per_sec);
            println!("memory bytes       {}", c.memory_bytes);
            Ok(0)
        }
    }
}

fn cmd_run(path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if out.is_some() {
        cfg.trace = true;
    }
    let result = run(&cfg)?;
    let m = &result.metrics;
    println!(
        "{} harmonia={} replicas={} seed={}: {:.0} ops/s ({:.0} reads, {:.0} writes), p50 {:.1} us, p99 {:.1} us, fast-path share {:.3}, violations {}",
        cfg.protocol.name(),
        cfg.effective_harmonia(),
        cfg.replicas,
        cfg.seed,
        m.throughput,
        m.read_throughput,
        m.write_throughput,
        m.p50_us,
        m.p99_us,
        m.single_replica_fraction,
        m.violations
    );
    if let Some(dir) = out {
        write_run(dir, &result)?;
        println!("wrote {}", dir.display());
    }
    if let Some(v) = result.report.violations.first() {
        eprintln!("violation: {:?} at {} ns: {}", v.kind, v.at_ns, v.detail);
        let witness = v.witness.as_deref().unwrap_or_default();
        for line in &witness[witness.len().saturating_sub(20)..] {
            eprintln!("  {line}");
        }
        return Ok(VIOLATION);
    }
    Ok(0)
}

struct Sweep {
    opts: SweepOptions,
    protocols: Option<Vec<Protocol>>,
    replicas: Option<Vec<u32>>,
    seeds: u64,
    mutate: Option<String>,
}

fn cmd_sweep(experiment: &str, out: &Path, s: &Sweep) -> Result<u8> {
    fs::create_dir_all(out)?;
    let protocols = |d: &[Protocol]| s.protocols.clone().unwrap_or_else(|| d.to_vec());
    let rows: Vec<Row> = match experiment {
        "scalability" => {
            let replicas = s
                .replicas
                .clone()
                .unwrap_or_else(|| defaults::REPLICAS.to_vec());
            let ps = protocols(&[Protocol::Pb, Protocol::Cr, Protocol::Vr]);
            experiments::scalability(&s.opts, &ps, &replicas, &experiments::SCALABILITY_MIXES)?
        }
        "write_ratio" => {
            let ps = protocols(&[Protocol::Pb, Protocol::Cr, Protocol::Craq, Protocol::Vr]);
            experiments::write_ratio(&s.opts, &ps, &defaults::WRITE_RATIOS)?
        }
        "read_vs_write" => experiments::read_vs_write(&s.opts, &defaults::WRITE_RATES)?,
        "memory" => experiments::memory(&s.opts, &defaults::SLOTS_PER_STAGE, 0.05, 0.9)?,
        "failover" => {
            let plan = FailoverPlan::default();
            let t = experiments::failover(&s.opts, &plan, Protocol::Cr)?;
            write_failover(out, &t)?;
            let rates = FailoverTimeline::rates(&t.bins, t.bin_ns);
            for (b, r) in t.bins.iter().zip(&rates) {
                println!("{:>6.1} ms {:>12.0} ops/s", b.start_ns as f64 / 1e6, r);
            }
            println!("wrote {}", out.join("failover.csv").display());
            return Ok(if t.violations > 0 { VIOLATION } else { 0 });
        }
        "faults" => {
            let mutations = match &s.mutate {
                Some(name) => {
                    Mutations::named(name).with_context(|| format!("unknown mutation {name:?}"))?
                }
                None => Mutations::default(),
            };
            let mut rows = Vec::new();
            for p in protocols(&[Protocol::Pb, Protocol::Cr, Protocol::Vr]) {
                for seed in 0..s.seeds {
                    let mut cfg = experiments::fault_injection_config(p, seed);
                    cfg.mutations = mutations;
                    let o = run(&cfg)?;
                    rows.push(Row::from_run("faults", &cfg, seed as f64, &o));
                }
            }
            rows
        }
        other => bail!("unknown experiment {other:?}"),
    };
    let csv = out.join(format!("{experiment}.csv"));
    write_rows(&csv, &rows)?;
    write_gnuplot(
        &out.join(format!("{experiment}.dat")),
        &series_of(&rows, |r| r.throughput),
    )?;
    for r in &rows {
        println!(
            "{:<14} {:<5} harmonia={:<5} R={:<2} wr={:<5} param={:<10} {:>12.0} ops/s  violations {}",
            r.experiment, r.protocol, r.harmonia, r.replicas, r.write_ratio, r.param, r.throughput, r.violations
        );
    }
    println!("wrote {}", csv.display());
    let bad = rows.iter().filter(|r| r.violations > 0).count();
    if bad > 0 {
        eprintln!("{bad} runs reported violations");
        return Ok(VIOLATION);
    }
    Ok(0)
}

fn cmd_check(cfg: &McConfig) -> Result<u8> {
    cfg.validate()?;
    let started = std::time::Instant::now();
    let outcome = mc::check(cfg);
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        McOutcome::Verified { states, depth } => {
            println!("verified: {states} distinct states, depth {depth}, {secs:.1}s");
            Ok(0)
        }
        McOutcome::Counterexample {
            trace,
            violation,
            states,
            ..
        } => {
            println!(
                "counterexample after {states} states ({secs:.1}s), {} steps:",
                trace.len()
            );
            print!("{}", mc::render_trace(cfg, &trace));
            println!(
                "violation: returned {} with ghost {} (stale={}, uncommitted={})",
                violation.write, violation.ghost, violation.stale, violation.uncommitted
            );
            Ok(VIOLATION)
        }
        McOutcome::BudgetExhausted { states, depth } => {
            println!(
                "state budget exhausted: {states} states, complete to depth {depth}, {secs:.1}s"
            );
            Ok(BUDGET)
        }
    }
}
