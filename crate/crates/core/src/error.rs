use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline, the tuners, or the recommender.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("duplicate id {id:?} in collection {source_id}")]
    DuplicateId { source_id: String, id: String },

    #[error("record {record} has no id column {column:?}")]
    MissingIdColumn { column: String, record: usize },

    #[error("ground-truth id {id:?} does not resolve in {source_id}")]
    UnresolvedId { source_id: String, id: String },

    #[error("collection {0} is empty")]
    EmptyCollection(String),

    #[error(
        "unknown embedder {0:?}; built-in embedders are hash2..hash5, pre-trained \
         model names need external vectors registered first"
    )]
    UnknownEmbedder(String),

    #[error("no vector for id {id:?} in embeddings {name:?}")]
    MissingVector { name: String, id: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("ground truth is empty; metrics are undefined")]
    EmptyGroundTruth,

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }
}
