//! Command-line surface for fallsense: dataset and scenario generation,
//! model training and evaluation, and replay of recorded traces through
//! the two-stage detector.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;

pub use error::CliError;
