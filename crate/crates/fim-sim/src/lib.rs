//! Monte Carlo experiment harness for the FIM link-level toolkit.
//!
//! * [`config`] — a human-editable TOML document with reference defaults,
//!   resolved and validated into the domain objects of [`fim_core`];
//! * [`runner`] — seeded paired-trial execution of the configured schemes
//!   across the sweep axis, deterministic for any worker count;
//! * [`output`] — CSV/JSON artifact emission with the resolved
//!   configuration embedded for verbatim re-runs.
//!
//! The `fim-sim` binary wraps these in a CLI with presets for the standard
//! sweeps (SINR target, path count, morphing range) and convergence traces.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig, Scheme, Sweep, SweepPoint};
pub use output::{emit_results, OutputError};
pub use runner::{
    run_experiment, ConvergenceTrace, ExperimentResult, RunError, SweepRow, TrialRecord,
};
