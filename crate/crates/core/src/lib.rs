//! Electrodermal stress detection: signal ingestion, filtering and windowing,
//! feature extraction, classifier training, evaluation protocols and the
//! statistical tests that compare them.

pub mod dsp;
pub mod error;
pub mod features;
pub mod ingest;
pub mod learners;
pub mod metrics;
pub mod protocol;
pub mod rng;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
