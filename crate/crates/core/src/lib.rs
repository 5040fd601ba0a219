pub mod error;
pub mod forcing;
pub mod harness;
pub mod integrator;
pub mod metrics;
pub mod model;
pub mod runner;
pub mod spectral;

pub use error::{Error, Result};
