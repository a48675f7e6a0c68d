//! Token embedding, projection to unit-norm matrices and projection training.

mod embedder;
mod matrix;
mod projection;
mod train;

pub use embedder::{EmbedderSpec, FileEmbedder, HashEmbedder, TokenEmbedder};
pub(crate) use matrix::is_zero_row;
pub use matrix::{
    fble_bytes, normalize, read_fble, write_fble, DocMatrices, EmbeddingMatrix, MatrixKind,
};
pub use projection::{embed_sequence, LinearProjection};
pub use train::{
    gradient_of_loss, raw_rows, train_projection, triplet_loss, triplet_loss_raw, DenseMatrix,
    TrainOutcome, TrainTrace, TripletExample, TripletTrainConfig,
};

use crate::binio::FormatError;

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedder dimension {embedder} does not match projection input {projection}")]
    DimensionMismatch { embedder: usize, projection: usize },
    #[error("token id {token} outside embedder range {size}")]
    TokenOutOfRange { token: u32, size: usize },
    #[error("invalid projection shape {d_in}x{d_out}")]
    BadProjectionShape { d_in: usize, d_out: usize },
    #[error("projection contains non-finite weights")]
    NonFiniteWeights,
    #[error("training needs at least one triplet")]
    NoTriplets,
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        loss: f64,
    },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Format(#[from] FormatError),
}
