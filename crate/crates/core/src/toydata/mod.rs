//! Synthetic multi-modal simulator and the nominal/perturbed campaign protocol.

pub mod campaign;
pub mod dataset;
pub mod generator;
pub mod io;
pub mod sample;
pub mod schema;

pub use campaign::{make_campaign, Campaign, CampaignSpec};
pub use dataset::{denormalize, normalize, normalize_image, Dataset, DatasetMeta, NormStats};
pub use generator::{hotspot_image, scalar_response, Generator, Physics, GENERATOR_VERSION};
pub use io::{load_dataset, save_dataset};
pub use sample::sample_inputs;
pub use schema::*;
