//! Experiment pipeline around the `forecastad` detector: simulation,
//! labelling, splitting, training, scoring, evaluation, ablations, plots and
//! deployment-set cleaning, each as a command over an output directory.

pub mod ablate;
pub mod clean;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod layout;
pub mod maps;
pub mod models;
pub mod plot;
pub mod scoring;

pub use commands::{render_plan, run, Command};
pub use config::{resolve, ConfigSources, ExperimentConfig, Profile};
pub use error::{CliError, CliResult};
