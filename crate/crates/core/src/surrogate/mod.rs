//! Initial simulation-trained surrogate: autoencoder E/D, forward F, inverse I.

pub mod arch;
pub mod mmd;
pub mod model;
pub mod nets;
pub mod train;

pub use arch::{ArchManifest, Architecture, DECODER_INNERMOST, ENCODER_INNERMOST, FORWARD_LAST};
pub use model::{r2_table, ModelNorm, Predictions, R2Table, SurrogateModel};
pub use train::{holdout_split, train_autoencoder, train_forward_inverse, train_surrogate, FiDecomposition, SurrogateTrainConfig, TrainingReport};
