use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::embedder::TokenEmbedder;
use super::matrix::{fble_bytes, read_fble, EmbeddingMatrix, MatrixKind};
use super::EmbedError;
use crate::binio::FormatError;
use crate::encode::EncodedSequence;

/// Trainable `d_in × d_out` map applied to every token embedding: `y = xᵀW`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProjection {
    d_in: usize,
    d_out: usize,
    /// Row-major, `d_in` rows of `d_out`.
    weights: Vec<f32>,
}

impl LinearProjection {
    pub fn new(d_in: usize, d_out: usize, weights: Vec<f32>) -> Result<Self, EmbedError> {
        if d_in == 0 || d_out == 0 || d_out > d_in {
            return Err(EmbedError::BadProjectionShape { d_in, d_out });
        }
        if weights.len() != d_in * d_out {
            return Err(EmbedError::BadProjectionShape { d_in, d_out });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(EmbedError::NonFiniteWeights);
        }
        Ok(Self {
            d_in,
            d_out,
            weights,
        })
    }

    /// Seeded uniform initialization in `[-1/√d_in, 1/√d_in]`.
    pub fn seeded(d_in: usize, d_out: usize, seed: u64) -> Result<Self, EmbedError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::seeded_with(d_in, d_out, &mut rng)
    }

    pub(crate) fn seeded_with<R: Rng>(
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Result<Self, EmbedError> {
        let bound = 1.0 / (d_in.max(1) as f64).sqrt();
        let weights = (0..d_in * d_out)
            .map(|_| rng.random_range(-bound..=bound) as f32)
            .collect();
        Self::new(d_in, d_out, weights)
    }

    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        Self::new(dim, dim, weights).expect("identity is valid")
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    /// `out = xᵀW`, accumulated in f64.
    pub fn apply(&self, x: &[f32], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (xi, wrow) in x.iter().zip(self.weights.chunks_exact(self.d_out)) {
            if *xi == 0.0 {
                continue;
            }
            let xi = f64::from(*xi);
            for (o, w) in out.iter_mut().zip(wrow) {
                *o += xi * f64::from(*w);
            }
        }
    }

    /// Serialized as an `FBLE` matrix with `d_in` rows of `d_out`.
    pub fn to_bytes(&self) -> Vec<u8> {
        fble_bytes(self.d_in, self.d_out, &self.weights)
    }

    pub fn from_bytes(bytes: &[u8], file: &str) -> Result<Self, EmbedError> {
        let (rows, dim, data) = read_fble(bytes, file)?;
        Self::new(rows, dim, data).map_err(|e| match e {
            EmbedError::Format(f) => EmbedError::Format(f),
            other => EmbedError::Format(FormatError::corrupt(file, other.to_string())),
        })
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}

/// Embed the non-`[PAD]` tokens of a sequence: `normalize(xᵀW)` per token.
pub fn embed_sequence(
    seq: &EncodedSequence,
    embedder: &dyn TokenEmbedder,
    projection: &LinearProjection,
    kind: MatrixKind,
) -> Result<EmbeddingMatrix, EmbedError> {
    if embedder.dim() != projection.d_in() {
        return Err(EmbedError::DimensionMismatch {
            embedder: embedder.dim(),
            projection: projection.d_in(),
        });
    }
    let d_out = projection.d_out();
    let mut raw = vec![0f32; embedder.dim()];
    let mut projected = vec![0f64; d_out];
    let mut data = Vec::with_capacity(seq.real_length * d_out);
    for &token in seq.real_ids() {
        embedder.embed_into(token, &mut raw)?;
        projection.apply(&raw, &mut projected);
        let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            data.extend(projected.iter().map(|v| (v / norm) as f32));
        } else {
            data.extend(std::iter::repeat_n(0.0f32, d_out));
        }
    }
    Ok(EmbeddingMatrix::new(d_out, data, kind))
}
