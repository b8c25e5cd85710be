use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure class the crate reports. The CLI maps each one to a nonzero
/// exit code and the service maps them to `{code, field?, message}` bodies.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("no flat-top window of at least {min_len} steps")]
    NoFlatTop { min_len: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("degenerate ECH profile: peak {peak:.3e} below amplitude floor {floor:.3e}")]
    DegenerateProfile { peak: f64, floor: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("candidate set is empty")]
    EmptyCandidates,

    #[error("no gyrotrons available")]
    NoGyrotrons,

    #[error("value out of range: {0}")]
    Range(String),

    #[error("dataset not found: {0}")]
    DatasetNotFound(String),

    #[error("session not found: {0}")]
    SessionNotFound(String),

    #[error("validation failed on `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("stale write: session is at version {current}, request carried {requested}")]
    StaleWrite { current: u64, requested: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, shared by the HTTP API, CLI and C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema_error",
            Error::NoFlatTop { .. } => "no_flat_top",
            Error::DegenerateData(_) => "degenerate_data",
            Error::DegenerateProfile { .. } => "degenerate_profile",
            Error::EmptyDataset(_) => "empty_dataset",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::NumericalFailure(_) => "numerical_failure",
            Error::EmptyCandidates => "empty_candidates",
            Error::NoGyrotrons => "no_gyrotrons",
            Error::Range(_) => "range_error",
            Error::DatasetNotFound(_) => "dataset_not_found",
            Error::SessionNotFound(_) => "session_not_found",
            Error::Validation { .. } => "validation_error",
            Error::StaleWrite { .. } => "stale_write",
            Error::Config(_) => "config_error",
            Error::Io(_) => "io_error",
            Error::Json(_) => "json_error",
            Error::Csv(_) => "csv_error",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) => 10,
            Error::NoFlatTop { .. } => 11,
            Error::DegenerateData(_) => 12,
            Error::DegenerateProfile { .. } => 13,
            Error::EmptyDataset(_) => 14,
            Error::NonFiniteLoss { .. } => 15,
            Error::NumericalFailure(_) => 16,
            Error::EmptyCandidates => 17,
            Error::NoGyrotrons => 18,
            Error::Range(_) => 19,
            Error::DatasetNotFound(_) => 20,
            Error::SessionNotFound(_) => 21,
            Error::Validation { .. } => 22,
            Error::StaleWrite { .. } => 23,
            Error::Config(_) => 24,
            Error::Io(_) => 30,
            Error::Json(_) => 31,
            Error::Csv(_) => 32,
        }
    }

    pub(crate) fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_owned(),
            message: message.into(),
        }
    }
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::schema(format!("{what}: expected length {expected}, got {got}")));
    }
    Ok(())
}
