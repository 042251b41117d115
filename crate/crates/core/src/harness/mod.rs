//! Cross-validation protocols, end-to-end runs and report emission.

mod config;
mod crossval;
mod plot;
mod report;
mod splits;

pub use config::RunConfig;
pub use crossval::{
    calibrate_and_validate, run_crossval, run_crossval_with_threads, run_synthetic_protocol, split_threads, BaselineSetup,
    SyntheticConfig, SyntheticOutcome, THREADS_ENV,
};
pub use report::{
    descriptor_triple, emit_report, CalibrationReport, Metric, Observation, PredictionRecord, Predictor, PredictorMetrics,
    RuntimeStats, SplitRecord, DESCRIPTOR_NAMES,
};
pub use splits::{make_splits, Protocol, Split, SplitPlan, HOLDOUT_REPEATS};
