//! Command-line front end for the finger dynamics engine.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_calibrate, cmd_compare, cmd_simulate, cmd_validate, Options};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::CliError;
