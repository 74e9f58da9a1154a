use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    Config { field: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("station at x = {x_m} m lies outside the core [{lo_m}, {hi_m}] m")]
    OutOfDomain { x_m: f64, lo_m: f64, hi_m: f64 },

    #[error("linear solve failed: {reason} (relative residual {residual:e})")]
    Numerical { reason: String, residual: f64 },

    #[error("model generation failed: {0}")]
    Generation(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("input carries a mask; reconstruct missing entries before inversion")]
    MaskPresent,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{0}")]
    Format(String),
}

impl Error {
    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::Config {
            field,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config { .. } => "config",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::Numerical { .. } => "numerical",
            Error::Generation(_) => "generation",
            Error::Training(_) => "training",
            Error::MaskPresent => "mask_present",
            Error::Io { .. } => "io",
            Error::Json { .. } => "json",
            Error::Format(_) => "format",
        }
    }
}
