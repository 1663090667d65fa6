//! Spherical integrals, symmetric-function asymptotics and large deviations
//! of spectra of sums of random matrices.

pub mod bridge;
pub mod error;
pub mod free_prob;
pub mod hciz;
pub mod linalg;
pub mod measure;
pub mod partition;
pub mod rate;
pub mod rmt;
pub mod stats;

pub use error::{Error, Result};
pub use measure::QuantileMeasure;
pub use partition::Partition;
