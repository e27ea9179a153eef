use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("no parseable records in {path} ({skipped} lines skipped; first problem: {first_problem})")]
    NoRecords {
        path: PathBuf,
        skipped: usize,
        first_problem: String,
    },

    #[error("unknown label `{label}` for the {task} scheme")]
    UnknownLabel { label: String, task: String },

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("class `{class}` has no instances")]
    EmptyClass { class: String },

    #[error("cannot stratify into {k} folds: class `{class}` has only {count} instances")]
    InfeasibleStratification {
        class: String,
        count: usize,
        k: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("class `{class}` has {count} instances, SMOTE with k={k} needs at least {needed}; try a smaller k")]
    ClassTooSmall {
        class: String,
        count: usize,
        k: usize,
        needed: usize,
    },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },

    #[error("classifier has not been trained")]
    Untrained,

    #[error("backend `{0}` is not installed")]
    BackendUnavailable(String),

    #[error("checkpoint not found: {0}")]
    MissingCheckpoint(String),

    #[error("model file integrity check failed: {0}")]
    Integrity(String),

    #[error("model file schema version {found} is not supported (expected {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("checksum mismatch for {path}: expected {expected}, got {actual}")]
    Checksum {
        path: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("network error: {0}")]
    Network(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used for CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::NoRecords { .. } => "no_records",
            Error::UnknownLabel { .. } => "unknown_label",
            Error::InvalidCorpus(_) => "invalid_corpus",
            Error::EmptyCorpus => "empty_corpus",
            Error::EmptyClass { .. } => "empty_class",
            Error::InfeasibleStratification { .. } => "infeasible_stratification",
            Error::Precondition(_) => "precondition",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ClassTooSmall { .. } => "class_too_small",
            Error::Diverged { .. } => "diverged",
            Error::Untrained => "untrained",
            Error::BackendUnavailable(_) => "backend_unavailable",
            Error::MissingCheckpoint(_) => "missing_checkpoint",
            Error::Integrity(_) => "integrity",
            Error::SchemaVersion { .. } => "schema_version",
            Error::Unsupported(_) => "unsupported",
            Error::Checksum { .. } => "checksum",
            Error::Stage { .. } => "stage",
            Error::Config(_) => "config",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Network(_) => "network",
        }
    }
}
