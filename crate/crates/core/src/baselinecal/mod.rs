//! Linear output calibration in a PCA-compressed output space, with
//! bootstrap aggregation over several fitted maps.

mod apply;
mod compressor;
mod linear;
mod pca;

pub use apply::{
    apply_baseline, apply_to_predictions, bagged_predict, compress_dataset, compress_predictions, decompress_rows,
    fit_baseline, fit_compressor_dataset, mean_predictions, BaselineConfig,
};
pub use compressor::{fit_compressor, OutputCompressor, DEFAULT_K_IMG};
pub use linear::{fit_linear, LinearCalibrator, DEFAULT_RIDGE};
pub use pca::Pca;
