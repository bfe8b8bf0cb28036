//! Detecting inaccurate electricity submeters from daily usage telemetry.

pub mod baselines;
pub mod classifier;
pub mod config;
pub mod data;
pub mod detector;
pub mod error;
pub mod eval;
pub mod nn;
pub mod pipeline;
pub mod predictor;
pub mod simgen;

pub use error::{Error, Result};
