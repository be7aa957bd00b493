//! Experiment harness: the simulation study, GTD runs, bound tables and
//! chain construction, with CSV results and SVG panels.

pub mod bounds;
pub mod chain;
pub mod config;
pub mod csv;
pub mod error;
pub mod figure1;
pub mod gtd;
pub mod plot;
pub mod svg;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, CliResult};
