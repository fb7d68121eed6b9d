use std::io;

use thiserror::Error;

use crate::graph::NodeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown node {0}")]
    UnknownNode(NodeId),

    #[error("conversion failed: {0}")]
    Conversion(String),

    #[error("illegal transition {transition}: {rule}")]
    IllegalTransition { transition: String, rule: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unknown task {0:?}")]
    UnknownTask(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("token sequences differ between predicted and gold graph {0:?}")]
    TokenMismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Rewrites the line number of a parse error, for errors raised on a
    /// single record of a multi-record file.
    pub fn at_line(self, line: usize) -> Self {
        match self {
            Error::Parse { message, .. } => Error::Parse { line, message },
            other => other,
        }
    }
}
