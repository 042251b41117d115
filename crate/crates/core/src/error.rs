use thiserror::Error;

/// Errors raised anywhere in the calibration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch at layer `{layer}`: {detail}")]
    Shape { layer: String, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("training diverged at iteration {iteration} (loss = {loss})")]
    Diverged { iteration: usize, loss: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("image encoding failed: {0}")]
    Image(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Rejections of caller input, as opposed to failures while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Shape { .. } | Error::Invalid(_) | Error::Singular(_) | Error::Json(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
