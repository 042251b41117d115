pub mod baselinecal;
pub mod diffcore;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod real;
pub mod seed;
pub mod surrogate;
pub mod toydata;
pub mod transfercal;

pub use error::{Error, Result};
pub use real::Real;

pub type ParameterSet64 = diffcore::ParameterSet<f64>;
pub type ParameterSet32 = diffcore::ParameterSet<f32>;
