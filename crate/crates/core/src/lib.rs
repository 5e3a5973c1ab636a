//! Wildfire-spread segmentation on a small reverse-mode tensor engine, with
//! attribution methods, masked metrics and a reporting CLI.

pub(crate) mod codec;
pub mod dataio;
pub mod digest;
pub mod error;
pub mod fsio;
pub mod metrics;
pub mod models;
pub mod report;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod xai;

pub use error::{Error, Result};
