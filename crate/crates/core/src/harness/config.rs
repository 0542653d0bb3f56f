//! Run configuration, read from TOML.

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::net::{
    Fault, FaultSchedule, Nanos, NetConfig, NetConfigError, ScheduleError, MICROS, MILLIS,
};
use crate::protocols::{CompletionDelay, Mutations, Protocol, ProtocolConfig};
use crate::workload::{WorkloadConfig, WorkloadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SwitchGeometry {
    pub stages: usize,
    pub slots: usize,
    /// Period of the stray-entry sweep; 0 disables it.
    pub gc_interval_ns: Nanos,
}

impl Default for SwitchGeometry {
    fn default() -> Self {
        SwitchGeometry {
            stages: 3,
            slots: 64_000,
            gc_interval_ns: MILLIS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub protocol: Protocol,
    #[serde(deserialize_with = "on_off")]
    pub harmonia: bool,
    pub replicas: u32,
    pub read_cost_ns: Nanos,
    pub write_cost_ns: Nanos,
    /// Cost of acknowledgements and other bookkeeping messages.
    pub ctrl_cost_ns: Nanos,
    pub net: NetConfig,
    pub workload: WorkloadConfig,
    pub switch: SwitchGeometry,
    pub faults: FaultSchedule,
    /// Keys written once at start by an unmeasured loader, so the switch
    /// sees a completion before the measured workload begins.
    pub preload_keys: u32,
    pub lease_duration_ns: Nanos,
    /// Let replicas cut the old switch's lease short instead of waiting it out.
    pub lease_cut_short: bool,
    /// Clients move to a newly activated switch one at a time, the last
    /// one this long after activation.
    pub route_update_delay_ns: Nanos,
    pub retransmit_ns: Nanos,
    pub tick_ns: Nanos,
    pub completion_delay: CompletionDelay,
    pub piggyback_commit_ack: bool,
    pub mutations: Mutations,
    pub seed: u64,
    pub duration_ns: Nanos,
    /// Operations finishing before this instant are not measured.
    pub warmup_ns: Nanos,
    /// After `duration_ns`, clients stop and in-flight work may finish for this long.
    pub drain_ns: Nanos,
    pub bin_ns: Nanos,
    /// Dirty-set occupancy sampling period.
    pub sample_ns: Nanos,
    pub trace: bool,
    /// End the run at the first checker violation.
    pub stop_on_violation: bool,
    pub max_events: u64,
}

fn on_off<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        B(bool),
        S(String),
    }
    match Flag::deserialize(d)? {
        Flag::B(b) => Ok(b),
        Flag::S(s) if s == "on" => Ok(true),
        Flag::S(s) if s == "off" => Ok(false),
        Flag::S(s) => Err(serde::de::Error::custom(format!(
            "expected on or off, got {s:?}"
        ))),
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            protocol: Protocol::Cr,
            harmonia: true,
            replicas: 3,
            read_cost_ns: 1_000,
            write_cost_ns: 1_250,
            ctrl_cost_ns: 100,
            net: NetConfig::default(),
            workload: WorkloadConfig::default(),
            switch: SwitchGeometry::default(),
            faults: FaultSchedule::default(),
            preload_keys: 1,
            lease_duration_ns: MILLIS,
            lease_cut_short: true,
            route_update_delay_ns: 0,
            retransmit_ns: 200 * MICROS,
            tick_ns: 20 * MICROS,
            completion_delay: CompletionDelay::All,
            piggyback_commit_ack: false,
            mutations: Mutations::default(),
            seed: 1,
            duration_ns: 20 * MILLIS,
            warmup_ns: 2 * MILLIS,
            drain_ns: 0,
            bin_ns: MILLIS,
            sample_ns: 100 * MICROS,
            trace: false,
            stop_on_violation: true,
            max_events: 500_000_000,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("at least one replica is required")]
    NoReplicas,
    #[error("switch table needs at least one stage and one slot")]
    EmptyTable,
    #[error("duration {duration}ns must exceed warmup {warmup}ns")]
    Duration { duration: Nanos, warmup: Nanos },
    #[error("{0} must be positive")]
    Zero(&'static str),
    #[error("replica 0 coordinates the protocol and cannot be crashed")]
    CoordinatorCrash,
    #[error("craq runs do not support server crashes")]
    CraqCrash,
    #[error("preload_keys {preload} exceeds num_keys {keys}")]
    Preload { preload: u32, keys: u32 },
    #[error(transparent)]
    Net(#[from] NetConfigError),
    #[error(transparent)]
    Faults(#[from] ScheduleError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
    #[error("invalid config: {0}")]
    Parse(String),
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Harmonia as actually run: CRAQ never uses the fast path.
    pub fn effective_harmonia(&self) -> bool {
        self.harmonia && self.protocol != Protocol::Craq
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicas == 0 {
            return Err(ConfigError::NoReplicas);
        }
        if self.switch.stages == 0 || self.switch.slots == 0 {
            return Err(ConfigError::EmptyTable);
        }
        if self.duration_ns <= self.warmup_ns {
            return Err(ConfigError::Duration {
                duration: self.duration_ns,
                warmup: self.warmup_ns,
            });
        }
        for (name, v) in [
            ("tick_ns", self.tick_ns),
            ("bin_ns", self.bin_ns),
            ("sample_ns", self.sample_ns),
            ("retransmit_ns", self.retransmit_ns),
            ("lease_duration_ns", self.lease_duration_ns),
            ("read_cost_ns", self.read_cost_ns),
            ("write_cost_ns", self.write_cost_ns),
        ] {
            if v == 0 {
                return Err(ConfigError::Zero(name));
            }
        }
        if self.preload_keys > self.workload.num_keys {
            return Err(ConfigError::Preload {
                preload: self.preload_keys,
                keys: self.workload.num_keys,
            });
        }
        self.net.validate()?;
        self.workload.validate()?;
        self.faults.validate(self.replicas)?;
        for f in &self.faults.0 {
            if let Fault::CrashServer { replica, .. } = f {
                if *replica == 0 {
                    return Err(ConfigError::CoordinatorCrash);
                }
                if self.protocol == Protocol::Craq {
                    return Err(ConfigError::CraqCrash);
                }
            }
        }
        Ok(())
    }

    pub fn protocol_config(&self) -> ProtocolConfig {
        let mut p = ProtocolConfig::new(self.protocol, self.replicas);
        p.retransmit_ns = self.retransmit_ns;
        p.completion_delay = self.completion_delay;
        p.piggyback_commit_ack = self.piggyback_commit_ack;
        p.lease_duration_ns = self.lease_duration_ns;
        p.mutations = self.mutations;
        p
    }

    pub fn client_timeout(&self) -> Nanos {
        self.workload.timeout_ns.unwrap_or(10 * self.net.base_rtt())
    }
}
