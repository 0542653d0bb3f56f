//! Simulation harness: configuration, the event-driven world, experiment
//! sweeps and output files.

pub mod config;
pub mod emit;
pub mod experiments;
pub mod metrics;
pub mod world;

pub use config::{ConfigError, RunConfig, SwitchGeometry};
pub use experiments::{FailoverPlan, FailoverTimeline, Row, SweepOptions};
pub use metrics::{percentile, Metrics, Recorder, TimelineBin};
pub use world::{run, RunError, RunOutput};
