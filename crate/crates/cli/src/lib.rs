//! Command-line front end: configuration files, series I/O, the `generate`
//! and `fit` commands and the bundled experiments.

pub mod commands;
pub mod config;
pub mod experiments;
pub mod output;
pub mod series;
