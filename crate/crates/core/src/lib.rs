//! Workbench for studying pre-trained vs. locally trained dynamics models of
//! heat-pump hot-water storage systems on synthetic data: a stratified-tank
//! simulator, regression example extraction, a small MLP trained from
//! scratch, the pre-training / fine-tuning experiment grid, and a
//! comfort-constrained reheat scheduling study.

pub mod config;
pub mod control;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
