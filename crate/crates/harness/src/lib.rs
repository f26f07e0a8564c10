//! Declarative experiment runner: JSON configs in, per-seed metrics,
//! seed aggregates and a manifest out.

pub mod aggregate;
pub mod config;
pub mod emit;
pub mod error;
pub mod experiments;
pub mod models;
pub mod report;
pub mod results;
pub mod run;

pub use aggregate::{aggregate, AggregateResult};
pub use config::{parse_config, ExperimentConfig, ExperimentKind};
pub use emit::{emit, Format};
pub use error::HarnessError;
pub use results::{RunResult, SeedResult};
pub use run::run;
