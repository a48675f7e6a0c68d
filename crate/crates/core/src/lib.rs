//! Bug localization over version history.
//!
//! Changesets are parsed from unified diffs, split into hunk, file or
//! changeset documents, tokenized into subwords and embedded one vector per
//! token. Documents are indexed with an inverted file over product-quantized
//! residuals; a bug report is answered by fetching candidate documents from
//! the index and re-ranking them with exact MaxSim scores.

pub mod api;
mod binio;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod encode;
pub mod eval;
pub mod index;
mod linalg;
pub mod pipeline;
pub mod retrieve;
pub mod store;
pub mod synth;

pub use binio::FormatError;
pub use config::{Config, Limits};
pub use linalg::{dot, l2_sq};

use serde::{Deserialize, Serialize};

/// Coarse error class, mapped to process exit codes by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    /// Bad flags or configuration.
    Usage,
    /// Unreadable, malformed or inconsistent input.
    Data,
    /// A bug or numerical failure on our side.
    Internal,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::Internal => 3,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown bug {0}")]
    UnknownBug(String),
    /// A request that cannot be served as given.
    #[error("{0}")]
    Request(String),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Encode(#[from] encode::EncodeError),
    #[error(transparent)]
    Embed(#[from] embed::EmbedError),
    #[error(transparent)]
    Index(#[from] index::IndexError),
    #[error(transparent)]
    Retrieve(#[from] retrieve::RetrieveError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
    #[error(transparent)]
    Store(#[from] store::StoreError),
    #[error(transparent)]
    Format(#[from] FormatError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        use embed::EmbedError as E;
        use index::IndexError as I;
        match self {
            Error::Config(_) | Error::Request(_) => ErrorKind::Usage,
            Error::Encode(encode::EncodeError::LimitTooSmall { .. }) => ErrorKind::Usage,
            Error::Embed(E::InvalidConfig(_) | E::BadProjectionShape { .. }) => ErrorKind::Usage,
            Error::Embed(E::NonFiniteLoss { .. }) => ErrorKind::Internal,
            Error::Index(I::InvalidParams(_))
            | Error::Retrieve(retrieve::RetrieveError::Index(I::InvalidParams(_))) => {
                ErrorKind::Usage
            }
            Error::Eval(eval::EvalError::InvalidCutoff(_)) => ErrorKind::Usage,
            Error::Retrieve(retrieve::RetrieveError::MissingDocument(_)) => ErrorKind::Internal,
            _ => ErrorKind::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}
