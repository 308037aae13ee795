//! Longitudinal self-supervised representation learning for retinal scans:
//! cohort handling, models, training protocols and evaluation metrics.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
