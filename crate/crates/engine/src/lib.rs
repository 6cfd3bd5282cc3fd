//! File formats, parallel ensembles, synthetic data, benchmarks and
//! evaluation reports around `odm-core`. The `odm` binary exposes them as
//! subcommands.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod evaluate;
pub mod io;
pub mod run;
pub mod stats;
pub mod svg;
pub mod synthetic;

pub use config::{load_run, LoadedRun, RunConfig};
pub use error::{EngineError, Result};
pub use evaluate::{evaluate_run, EvalOptions, MetricReport};
pub use run::{run, RunSummary};
