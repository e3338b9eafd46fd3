use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown node code `{code}`{}", context.as_deref().map(|c| format!(" in {c}")).unwrap_or_default())]
    UnknownNode { code: String, context: Option<String> },

    #[error("invalid hierarchy: {0}")]
    Hierarchy(String),

    #[error("unknown variable code `{0}`")]
    UnknownVariable(String),

    #[error("duplicate cell for node {node}, variable {variable}, month {month}")]
    DuplicateCell {
        node: String,
        variable: String,
        month: String,
    },

    #[error("non-contiguous months for node {node}, variable {variable}; gaps: {}", gaps.join(", "))]
    NonContiguous {
        node: String,
        variable: String,
        gaps: Vec<String>,
    },

    #[error("missing cells: {0}")]
    MissingCells(String),

    #[error("invalid period `{0}`")]
    InvalidPeriod(String),

    #[error("invalid value: {0}")]
    InvalidValue(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("series too short: need at least {needed} observations, got {got}")]
    SeriesTooShort { needed: usize, got: usize },

    #[error("variable {0} is not additive and cannot be aggregated")]
    NotAdditive(String),

    #[error("missing child node `{0}`")]
    MissingChild(String),

    #[error("missing region `{0}`")]
    MissingRegion(String),

    #[error("span mismatch: {0}")]
    SpanMismatch(String),

    #[error("model fit failed: {0}")]
    ModelFit(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    /// Short machine-readable tag, used in structured error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::UnknownNode { .. } => "unknown_node",
            Error::Hierarchy(_) => "invalid_hierarchy",
            Error::UnknownVariable(_) => "unknown_variable",
            Error::DuplicateCell { .. } => "duplicate_cell",
            Error::NonContiguous { .. } => "non_contiguous",
            Error::MissingCells(_) => "missing_cells",
            Error::InvalidPeriod(_) => "invalid_period",
            Error::InvalidValue(_) => "invalid_value",
            Error::InvalidInput(_) => "invalid_input",
            Error::SeriesTooShort { .. } => "series_too_short",
            Error::NotAdditive(_) => "not_additive",
            Error::MissingChild(_) => "missing_child",
            Error::MissingRegion(_) => "missing_region",
            Error::SpanMismatch(_) => "span_mismatch",
            Error::ModelFit(_) => "model_fit",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
