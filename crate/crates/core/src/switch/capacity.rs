//! Back-of-envelope sizing of the dirty-set table.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CapacityError {
    #[error("stages and slots must be positive")]
    EmptyTable,
    #[error("utilization must be in (0, 1], got {0}")]
    Utilization(f64),
    #[error("write duration must be positive, got {0}")]
    WriteDuration(f64),
    #[error("write ratio must be in (0, 1], got {0}")]
    WriteRatio(f64),
    #[error("entry width must be positive")]
    EntryWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Capacity {
    /// Writes the table can hold at once: `u·n·m`.
    pub concurrent_writes: f64,
    /// `u·n·m / t`.
    pub writes_per_sec: f64,
    /// `u·n·m / (w·t)`.
    pub total_per_sec: f64,
    /// `n·m·(id_bits + seq_bits) / 8`.
    pub memory_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityParams {
    pub stages: u64,
    pub slots: u64,
    pub utilization: f64,
    pub write_secs: f64,
    pub write_ratio: f64,
    pub id_bits: u64,
    pub seq_bits: u64,
}

impl CapacityParams {
    /// 32-bit object IDs and 32-bit sequence numbers.
    pub fn new(
        stages: u64,
        slots: u64,
        utilization: f64,
        write_secs: f64,
        write_ratio: f64,
    ) -> Self {
        CapacityParams {
            stages,
            slots,
            utilization,
            write_secs,
            write_ratio,
            id_bits: 32,
            seq_bits: 32,
        }
    }
}

pub fn capacity(p: &CapacityParams) -> Result<Capacity, CapacityError> {
    if p.stages == 0 || p.slots == 0 {
        return Err(CapacityError::EmptyTable);
    }
    if !(p.utilization > 0.0 && p.utilization <= 1.0) {
        return Err(CapacityError::Utilization(p.utilization));
    }
    if !(p.write_secs > 0.0 && p.write_secs.is_finite()) {
        return Err(CapacityError::WriteDuration(p.write_secs));
    }
    if !(p.write_ratio > 0.0 && p.write_ratio <= 1.0) {
        return Err(CapacityError::WriteRatio(p.write_ratio));
    }
    if p.id_bits + p.seq_bits == 0 {
        return Err(CapacityError::EntryWidth);
    }
    let slots = (p.stages * p.slots) as f64;
    let concurrent_writes = p.utilization * slots;
    let writes_per_sec = concurrent_writes / p.write_secs;
    Ok(Capacity {
        concurrent_writes,
        writes_per_sec,
        total_per_sec: writes_per_sec / p.write_ratio,
        memory_bytes: p.stages * p.slots * (p.id_bits + p.seq_bits) / 8,
    })
}
