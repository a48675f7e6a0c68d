//! Changeset data model: diff parsing, document explosion, training
//! triplets and corpus ingestion.

mod diff;
mod docs;
mod ingest;
mod triplets;

use std::path::Path;

pub use diff::{class_name_of, parse_unified_diff, Changeset, DiffLine, FileDiff, Hunk, LineKind};
pub use docs::{doc_id, explode, origin_of, Document, Granularity, Payload};
pub use ingest::{qrels_from_links, read_bugs, read_links, BugReport, Corpus, GoldLink};
pub use triplets::{build_triplets, split_train_test, Triplet};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("malformed diff{} at line {line}: {message}", changeset.as_ref().map(|c| format!(" in changeset {c}")).unwrap_or_default())]
    MalformedDiff {
        changeset: Option<String>,
        line: usize,
        message: String,
    },
    #[error("{file}:{line}: {message}")]
    Json {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown bug {0}")]
    UnknownBug(String),
    #[error("unknown changeset {0}")]
    UnknownChangeset(String),
    #[error("bug {0} has no opening timestamp")]
    MissingTimestamp(String),
    #[error("changeset {0} has no documents at this granularity")]
    NoPositiveDocuments(String),
    #[error("no negative document available for bug {0}")]
    NoNegativeAvailable(String),
}

impl CorpusError {
    pub(crate) fn malformed(line: usize, message: impl Into<String>) -> Self {
        CorpusError::MalformedDiff {
            changeset: None,
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
