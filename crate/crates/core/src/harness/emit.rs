//! Writing results to disk: CSV tables, JSON-lines traces, JSON metrics
//! and whitespace-separated data files that gnuplot reads directly.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use super::experiments::{FailoverTimeline, Row};
use super::world::RunOutput;

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub const CSV_HEADER: [&str; 14] = [
    "experiment",
    "protocol",
    "harmonia",
    "replicas",
    "write_ratio",
    "param",
    "throughput",
    "read_throughput",
    "write_throughput",
    "p50_us",
    "p99_us",
    "dropped_writes",
    "violations",
    "seed",
];

pub fn rows_to_csv<W: Write>(rows: &[Row], w: W) -> Result<(), EmitError> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(CSV_HEADER)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn rows_from_csv<R: io::Read>(r: R) -> Result<Vec<Row>, EmitError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|r| r.map_err(EmitError::from))
        .collect()
}

pub fn write_rows(path: &Path, rows: &[Row]) -> Result<(), EmitError> {
    rows_to_csv(rows, BufWriter::new(File::create(path)?))
}

/// One `x y` line per row of a series, grouped in blocks separated by blank
/// lines as gnuplot's `index` expects.
pub fn write_gnuplot(path: &Path, series: &[(String, Vec<(f64, f64)>)]) -> Result<(), EmitError> {
    let mut f = BufWriter::new(File::create(path)?);
    for (i, (name, pts)) in series.iter().enumerate() {
        if i > 0 {
            writeln!(f, "\n")?;
        }
        writeln!(f, "# {name}")?;
        for (x, y) in pts {
            writeln!(f, "{x} {y}")?;
        }
    }
    f.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, lines: &[String]) -> Result<(), EmitError> {
    let mut f = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(())
}

/// Metrics and checker report of one run, plus its trace when recorded.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), EmitError> {
    fs::create_dir_all(dir)?;
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(dir.join("metrics.json"))?),
        &out.metrics,
    )?;
    serde_json::to_writer_pretty(
        BufWriter::new(File::create(dir.join("report.json"))?),
        &out.report,
    )?;
    if !out.trace.is_empty() {
        write_trace(&dir.join("trace.jsonl"), &out.trace)?;
    }
    let series = vec![(
        "throughput".to_string(),
        out.metrics
            .timeline
            .iter()
            .map(|b| (b.start_ns as f64 / 1e6, (b.reads + b.writes) as f64))
            .collect(),
    )];
    write_gnuplot(&dir.join("timeline.dat"), &series)
}

pub fn write_failover(dir: &Path, t: &FailoverTimeline) -> Result<(), EmitError> {
    fs::create_dir_all(dir)?;
    let mut wr = csv::Writer::from_path(dir.join("failover.csv"))?;
    wr.write_record(["t_ms", "ops_per_sec", "baseline_ops_per_sec"])?;
    let rates = FailoverTimeline::rates(&t.bins, t.bin_ns);
    let base = FailoverTimeline::rates(&t.baseline_bins, t.bin_ns);
    for (i, b) in t.bins.iter().enumerate() {
        let ms = b.start_ns as f64 / 1e6;
        wr.write_record([
            ms.to_string(),
            rates[i].to_string(),
            base.get(i).copied().unwrap_or(0.0).to_string(),
        ])?;
    }
    wr.flush()?;
    serde_json::to_writer_pretty(BufWriter::new(File::create(dir.join("failover.json"))?), t)?;
    Ok(())
}

/// Groups rows into gnuplot series keyed by experiment, protocol, fast-path
/// flag and write ratio, plotting `y` against `param`.
pub fn series_of(rows: &[Row], y: impl Fn(&Row) -> f64) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        let name = format!(
            "{} {} harmonia={} write_ratio={}",
            r.experiment, r.protocol, r.harmonia, r.write_ratio
        );
        match out.iter_mut().find(|(n, _)| *n == name) {
            Some((_, pts)) => pts.push((r.param, y(r))),
            None => out.push((name, vec![(r.param, y(r))])),
        }
    }
    out
}
