//! Configuration, experiment orchestration, persistence and reports.

pub mod config;
pub mod experiment;
pub mod io;
pub mod korn;
pub mod report;
pub mod verify;

pub use config::{default_scenario, parse_config, RunConfig};
pub use experiment::{convergence_study, run_experiment, steady_command, RunOutcome};
pub use io::{parse_trace_csv, trace_to_csv, Snapshot, TraceTable};
pub use report::{RunReport, Status};
pub use verify::verify_lemmas;
