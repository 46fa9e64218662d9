use std::path::PathBuf;

use thiserror::Error;

use crate::layout::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("layout has no {0} surface")]
    MissingSurface(&'static str),
    #[error("invalid layout: {0:?}")]
    InvalidLayout(Vec<Violation>),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("format error: {0}")]
    Format(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("candidate enumeration exceeded budget ({0} subsets)")]
    BudgetExceeded(usize),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty candidate set")]
    EmptyCandidates,
    #[error("empty input")]
    EmptyInput,
    #[error("training loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image {id} ({path}): {source}")]
    Entry {
        id: String,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches the offending image id and file path.
    pub fn for_entry(self, id: &str, path: impl Into<PathBuf>) -> Self {
        Error::Entry {
            id: id.to_string(),
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by configuration rather than data.
    pub fn is_config(&self) -> bool {
        match self {
            Error::Config(_) => true,
            Error::Entry { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
