//! Subword tokenization and special-token input sequences.

mod sequence;
mod tokenize;
mod vocab;

pub use sequence::{
    encode_document, encode_query, encode_query_text, EncodedSequence, Strategy,
    MIN_DOCUMENT_LIMIT, MIN_QUERY_LIMIT,
};
pub use tokenize::{pre_tokenize, wordpiece_tokenize, MAX_SUBWORD_CHARS};
pub use vocab::{Special, Vocabulary, CONTINUATION};

#[derive(Debug, thiserror::Error)]
pub enum EncodeError {
    #[error("length limit {limit} below minimum {min}")]
    LimitTooSmall { limit: usize, min: usize },
    #[error("duplicate vocabulary entry {0:?}")]
    DuplicateToken(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
