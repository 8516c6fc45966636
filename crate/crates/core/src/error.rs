//! Error type shared by every module of the crate.

use std::path::PathBuf;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
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

    #[error("empty set")]
    EmptySet,

    #[error("dimension mismatch: expected {expected}, got {actual}{}", id_suffix(.id))]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        id: Option<String>,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("non-finite value in record `{0}`")]
    NonFinite(String),

    #[error("zero-norm vector{}", id_suffix(.0))]
    ZeroNorm(Option<String>),

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(String),

    #[error("unsupported color type: {0} (expected RGB)")]
    UnsupportedColorType(String),

    #[error("png decode failure: {0}")]
    PngDecode(String),

    #[error("png encode failure: {0}")]
    PngEncode(String),

    #[error("incomplete detection log: {count} missing cell(s), first: {}", format_cells(.missing))]
    MissingCells {
        count: usize,
        missing: Vec<(u8, u8, u16)>,
    },

    #[error("duplicate detection cell (model {0}, scene {1}, frame {2})")]
    DuplicateCell(u8, u8, u16),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("missing label for id `{0}`")]
    MissingLabel(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("void result: {regions} connected regions exceed the limit of {limit}")]
    VoidResult { regions: usize, limit: usize },

    #[error("singular matrix")]
    SingularMatrix,

    #[error("constraints unsatisfied after {0} attempts")]
    RetriesExhausted(usize),

    #[error("provider failure: {0}")]
    Provider(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl ToString) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.to_string(),
        }
    }

    pub(crate) fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}

fn id_suffix(id: &Option<String>) -> String {
    match id {
        Some(id) => format!(" (record `{id}`)"),
        None => String::new(),
    }
}

fn format_cells(cells: &[(u8, u8, u16)]) -> String {
    cells
        .iter()
        .take(10)
        .map(|(m, s, f)| format!("({m},{s},{f})"))
        .collect::<Vec<_>>()
        .join(", ")
}
