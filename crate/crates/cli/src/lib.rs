//! Command-line pipeline: synthetic data, profiles, training, generation
//! and evaluation.

pub mod commands;
pub mod config;

pub use config::RunConfig;
