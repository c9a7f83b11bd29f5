pub mod augmentation;
pub mod checkpoint;
pub mod config;
pub mod datasets;
pub mod diagnosis;
pub mod error;
pub mod evaluation;
pub mod extractor;
pub mod nn;
pub mod oracles;
pub mod plots;
pub mod preprocessing;
pub mod runner;
pub mod scoring;
pub mod training;

pub use error::{Error, Result};
