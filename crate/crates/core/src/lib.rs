pub mod cli;
pub mod dataset;
pub mod dsp;
pub mod error;
pub mod harness;
pub mod knowledge;
pub mod model;
pub mod nn;
pub mod rng;

pub use error::{MinaError, Result};
