//! Config-driven scenarios comparing the sieve with its limits.

pub mod config;
pub mod report;
pub mod runner;

pub use config::{parse_config, Scenario, ScenarioConfig};
pub use report::{LimitRow, NormingRecord, OccupancyRow, RunInfo, ScenarioReport, TestRecord};
pub use runner::{resolve_workers, run_scenario};
