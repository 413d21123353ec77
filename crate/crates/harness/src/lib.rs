//! Experiment harness for `dmbsim-core`: TOML scenarios, good-period
//! tracking, post-hoc protocol checks, versioned CSV reports, sweeps and the
//! acceptance suite.

// `!(x > 0.0)` is deliberate: NaN must fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod checks;
pub mod compare;
pub mod config;
pub mod periods;
pub mod report;
pub mod runner;
pub mod sweep;

pub use config::ScenarioConfig;
pub use runner::{run_experiment, Outcome};
