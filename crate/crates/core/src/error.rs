use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    Parse {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("duplicate annotation for task `{task}` by annotator `{annotator}`")]
    DuplicateAnnotation { task: String, annotator: String },

    #[error("unknown label `{label}`{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    UnknownLabel {
        label: String,
        context: Option<String>,
    },

    #[error("label set has {0} choices, at least 2 are required")]
    TooFewChoices(usize),

    #[error("cannot split: {0}")]
    Split(String),

    #[error("task {0} has no annotations")]
    EmptyTask(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training split is empty")]
    EmptyTrainingSplit,

    #[error("non-finite {what} at epoch {epoch}")]
    NonFinite { what: &'static str, epoch: usize },

    #[error("model is incompatible with the input: {0}")]
    IncompatibleModel(String),

    #[error("unknown method `{name}`; available: {}", available.join(", "))]
    UnknownMethod {
        name: String,
        available: Vec<&'static str>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
