//! Driver for the trajectory prediction robustness benchmark.
//!
//! [`run_benchmark`] generates or loads scenes, trains every model in the
//! roster, scores each one on clean and perturbed test data, optionally
//! retrains on augmented data, and writes a deterministic `report.json`
//! together with Markdown, CSV and summary renderings.

pub mod bench;
pub mod config;
pub mod error;
pub mod report;

pub use bench::{run_benchmark, BenchOutcome, RunContext, Timings};
pub use config::{BenchConfig, DataSource, ModelKind, ModelSpec, TargetFilter};
pub use error::CliError;
pub use report::{emit_report, BenchmarkReport, Format};
