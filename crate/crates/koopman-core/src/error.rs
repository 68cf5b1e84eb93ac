//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-side precondition was violated (dimension mismatch,
    /// out-of-range parameter, empty dataset, non-finite input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Integration produced a non-finite state. The trajectory index is
    /// reported when the overflow happened inside dataset generation.
    #[error("integration overflow{}", match .trajectory {
        Some(j) => format!(" in trajectory {j}"),
        None => String::new(),
    })]
    IntegrationOverflow { trajectory: Option<usize> },

    /// The requested dictionary would exceed the lifted-dimension cap.
    #[error("lifted dimension {requested} exceeds cap {cap}")]
    DimensionCap { requested: usize, cap: usize },

    /// An operation requires a configuration the object was not built with.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// The QP constraint set is empty; carries a Farkas-style certificate.
    #[error("infeasible QP: {reason}")]
    QpInfeasible { reason: String, certificate: Vec<f64> },

    /// Experiment configuration could not be parsed or failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A persisted artifact (model file, dataset CSV) is malformed.
    #[error("parse error: {0}")]
    Parse(String),

    /// Model file schema version is not the one this build writes.
    #[error("model schema version {found} (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
