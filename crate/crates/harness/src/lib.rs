//! Configuration-driven experiment runner for persistent Q-learning.
//!
//! An [`config::ExperimentConfig`] names an experiment kind, an environment
//! and a seed list. [`runner::run_experiment`] executes every
//! (series, seed) cell on a bounded thread pool and writes a run directory:
//!
//! ```text
//! <out>/<name>/
//!   raw/<series>_seed<seed>.csv   one file per successful cell
//!   aggregate.csv                 series,index,n,mean,ci_low,ci_high
//!   manifest.json                 config hash, versions, timings, file hashes
//! ```

pub mod aggregate;
pub mod config;
pub mod output;
pub mod plot;
pub mod runner;
