//! k-means, product quantization and the IVFPQ index built from them.

mod ivfpq;
mod kmeans;
mod pq;

pub use ivfpq::{Hit, IndexParams, IvfPqIndex, RegistryEntry, MAX_TRAINING_ROWS};
pub use kmeans::{kmeans, nearest, KMeans, DEFAULT_MAX_ITERS};
pub use pq::PqCodebook;

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("{rows} embeddings cannot fill {partitions} partitions")]
    InsufficientData { rows: usize, partitions: usize },
    #[error("index is empty")]
    EmptyIndex,
    #[error("query has no scorable rows")]
    EmptyQuery,
    #[error("expected dimension {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{0}")]
    InvalidParams(String),
}
