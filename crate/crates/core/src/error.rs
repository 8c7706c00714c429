use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record in an input file could not be parsed. `location` names the
    /// file and line (or record index).
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("knowledge base is not rectangular: row {row} has {found} cells, expected {expected}")]
    NonRectangular {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("index ({row}, {col}) outside a {rows}x{cols} grid")]
    CellOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("entity index {index} outside a grid of {cells} cells")]
    EntityOutOfRange { index: usize, cells: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("length mismatch in {what}: {left} vs {right}")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("shape mismatch for `{name}`: {expected:?} vs {found:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),

    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),

    #[error("no weak label for dialogue {0}")]
    MissingLabel(usize),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("decode step {step} out of range (response has {len} steps)")]
    StepOutOfRange { step: usize, len: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    /// Errors caused by malformed or missing input data rather than by the
    /// program itself.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Parse { .. }
                | Error::NonRectangular { .. }
                | Error::Empty(_)
                | Error::MissingLabel(_)
                | Error::Checkpoint(_)
        )
    }
}
