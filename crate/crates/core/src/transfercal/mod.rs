//! Few-shot recalibration of a trained surrogate against experiments.

pub mod config;
pub mod learn;
pub mod loss;

pub use config::{LossMode, Strategy, TLConfig};
pub use learn::{strategy_layers, transfer_learn, CalibratedModel};
pub use loss::tl_loss;
