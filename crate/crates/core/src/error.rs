use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, found {found:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("duplicate parameter name `{0}`")]
    DuplicateParam(String),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("token id {id} out of vocabulary (size {vocab})")]
    OutOfVocabulary { id: u32, vocab: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("checkpoint: bad magic")]
    BadMagic,
    #[error("checkpoint: truncated file ({0})")]
    Truncated(&'static str),
    #[error("checkpoint: missing tensor `{0}`")]
    MissingTensor(String),
    #[error("checkpoint: unexpected tensor `{0}`")]
    UnexpectedTensor(String),
    #[error("checkpoint: tensor `{name}` has shape {found:?}, model expects {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("checkpoint: trailing bytes after last tensor")]
    TrailingBytes,
    #[error("checkpoint: invalid tensor name encoding")]
    BadName,

    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid item id {0}")]
    InvalidItem(usize),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("not enough eligible items: need {needed}, have {available}")]
    NotEnoughItems { needed: usize, available: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: &[usize], found: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            found: found.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(err: serde_json::Error) -> Self {
        Error::Parse {
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }
}
