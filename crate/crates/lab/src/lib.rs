//! Experiment harness for the `ganmpc` crate: TOML configuration,
//! demonstration files, training run directories, evaluation and reports.
//!
//! The `ganmpc` binary exposes the same operations on the command line:
//!
//! ```text
//! ganmpc demo-collect --config configs/pendulum.toml
//! ganmpc train --config configs/pendulum.toml --algorithm gan_mpc --imitator 2 --seed 0
//! ganmpc eval --run out/runs/<run>
//! ganmpc report --runs 'out/runs/*' --check
//! ```

pub mod config;
pub mod demos;
pub mod error;
pub mod evaluate;
pub mod formats;
pub mod hash;
pub mod report;
pub mod run;
pub mod seeds;

pub use config::ExperimentConfig;
pub use error::{LabError, Result};
