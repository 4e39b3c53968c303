//! File formats, experiment configuration and the Monte Carlo runner behind
//! the `glmb` command-line tool.

pub mod battery;
pub mod config;
pub mod output;
pub mod pgm;
pub mod runner;

pub use config::{Config, ConfigError, Variant};
