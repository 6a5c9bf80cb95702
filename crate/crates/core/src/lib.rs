pub mod csv;
pub mod dynamics;
pub mod error;
pub mod expand;
pub mod gram;
pub mod harness;
pub mod matrix;
pub mod montecarlo;
pub mod netsim;
pub mod rmt;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
