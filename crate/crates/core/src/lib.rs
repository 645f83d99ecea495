pub mod bayes;
pub mod data;
pub mod error;
pub mod features;
pub mod metrics;

pub use error::{Error, Result};
pub mod models;
pub mod train;
pub mod checkpoint;
pub mod config;
pub mod grid;
pub mod pipeline;
pub mod report;
