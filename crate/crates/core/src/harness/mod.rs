//! Configuration ingestion, grid sweeps, invariant suites and report
//! emission.

pub mod config;
pub mod invariants;
pub mod output;
pub mod sweep;

pub use config::{validate_config, ConfigError, NSchedule, OutputFormat, OutputSpec, RunConfig, TestHooks, Tolerances};
pub use invariants::{run_invariant_suite, InvariantEntry, InvariantReport};
pub use output::{config_json, to_json, write_invariants_csv, write_sweep_csv};
pub use sweep::{run_density_sweep, CheckOutcome, ComparisonReport, RouteSet, StabilizedCell, SweepRow, SweepSummary};
