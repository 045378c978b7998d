//! Degree-corrected mixed membership networks: simulation, Mixed-SCORE
//! estimation, loss evaluation and lower-bound packing certification.

pub mod bench;
pub mod cluster;
pub mod error;
pub mod estimator;
pub mod loss;
pub mod lowerbound;
pub mod model;
pub mod sampler;

pub use error::{Error, Result};
