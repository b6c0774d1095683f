//! Pose-based tremor analysis.

mod binio;
pub mod cli;
pub mod config;
pub mod error;
pub mod evaluation;
pub mod evm;
pub mod frequency;
pub mod nnet;
pub mod pcsf;
pub mod pose;
pub mod skeleton;
pub mod synthetic;
pub mod task;
pub mod training;

pub use error::{Error, Result};
