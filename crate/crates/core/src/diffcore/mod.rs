//! Minimal reverse-mode network toolkit: dense and (transposed) convolutional
//! layers, named parameter sets with freeze masks, Adam, and gradient checks.

pub mod gradcheck;
pub mod layer;
pub mod optim;
pub mod params;
pub mod persist;

pub use gradcheck::{compare_gradients, gradient_check, squared_loss, FD_STEP};
pub use layer::{Activation, Layer, LayerKind, LayerSpec, LEAKY_SLOPE};
pub use optim::{optimize, FnObjective, LossTrace, Objective, Schedule, TrainConfig};
pub use params::{ParameterSet, Trace, TrainMask};
pub use persist::{load_parameters, save_parameters};
