use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::matrix::{normalize, read_fble};
use super::EmbedError;

/// Context-free stand-in for the transformer: one fixed vector per token id.
pub trait TokenEmbedder: Send + Sync {
    fn dim(&self) -> usize;

    /// Number of addressable token ids, `None` if unbounded.
    fn vocab_size(&self) -> Option<usize>;

    fn embed_into(&self, token: u32, out: &mut [f32]) -> Result<(), EmbedError>;

    fn spec(&self) -> EmbedderSpec;
}

/// Identity of an embedder, recorded in session manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EmbedderSpec {
    Hash { seed: u64, d_in: usize },
    File { sha256: String, d_in: usize },
}

impl EmbedderSpec {
    pub fn d_in(&self) -> usize {
        match self {
            EmbedderSpec::Hash { d_in, .. } | EmbedderSpec::File { d_in, .. } => *d_in,
        }
    }
}

/// Seeded pseudo-random unit vector per token id (Gaussian direction).
pub struct HashEmbedder {
    seed: u64,
    dim: usize,
    cache: RwLock<HashMap<u32, Arc<[f32]>>>,
}

impl HashEmbedder {
    pub fn new(seed: u64, dim: usize) -> Self {
        assert!(dim > 0);
        Self {
            seed,
            dim,
            cache: RwLock::new(HashMap::new()),
        }
    }

    fn generate(&self, token: u32) -> Arc<[f32]> {
        // splitmix-style mixing so neighbouring ids get unrelated streams
        let mut z = self.seed ^ (u64::from(token)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        let mut rng = ChaCha8Rng::seed_from_u64(z);
        let mut v: Vec<f32> = (0..self.dim)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                x as f32
            })
            .collect();
        normalize(&mut v);
        v.into()
    }

    fn vector(&self, token: u32) -> Arc<[f32]> {
        if let Some(v) = self.cache.read().unwrap().get(&token) {
            return v.clone();
        }
        let v = self.generate(token);
        self.cache
            .write()
            .unwrap()
            .entry(token)
            .or_insert(v)
            .clone()
    }
}

impl TokenEmbedder for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocab_size(&self) -> Option<usize> {
        None
    }

    fn embed_into(&self, token: u32, out: &mut [f32]) -> Result<(), EmbedError> {
        out.copy_from_slice(&self.vector(token));
        Ok(())
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::Hash {
            seed: self.seed,
            d_in: self.dim,
        }
    }
}

/// Static table indexed by token id, loaded from an `FBLE` file.
pub struct FileEmbedder {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    sha256: String,
}

impl FileEmbedder {
    pub fn from_bytes(bytes: &[u8], file: &str) -> Result<Self, EmbedError> {
        let (rows, dim, data) = read_fble(bytes, file)?;
        if dim == 0 {
            return Err(EmbedError::Format(crate::binio::FormatError::corrupt(
                file,
                "zero embedding dimension",
            )));
        }
        Ok(Self {
            rows,
            dim,
            data,
            sha256: hex::encode(Sha256::digest(bytes)),
        })
    }

    pub fn load(path: &Path) -> Result<Self, EmbedError> {
        let name = path.display().to_string();
        let bytes = std::fs::read(path).map_err(|e| crate::binio::FormatError::io(&name, e))?;
        Self::from_bytes(&bytes, &name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        super::fble_bytes(self.rows, self.dim, &self.data)
    }
}

impl TokenEmbedder for FileEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn vocab_size(&self) -> Option<usize> {
        Some(self.rows)
    }

    fn embed_into(&self, token: u32, out: &mut [f32]) -> Result<(), EmbedError> {
        let t = token as usize;
        if t >= self.rows {
            return Err(EmbedError::TokenOutOfRange {
                token,
                size: self.rows,
            });
        }
        out.copy_from_slice(&self.data[t * self.dim..(t + 1) * self.dim]);
        Ok(())
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::File {
            sha256: self.sha256.clone(),
            d_in: self.dim,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::matrix::fble_bytes;

    #[test]
    fn hash_embedder_is_deterministic_unit() {
        let a = HashEmbedder::new(42, 16);
        let b = HashEmbedder::new(42, 16);
        let c = HashEmbedder::new(43, 16);
        let mut x = vec![0.0; 16];
        let mut y = vec![0.0; 16];
        let mut z = vec![0.0; 16];
        a.embed_into(7, &mut x).unwrap();
        b.embed_into(7, &mut y).unwrap();
        c.embed_into(7, &mut z).unwrap();
        assert_eq!(x, y);
        assert_ne!(x, z);
        let norm: f32 = x.iter().map(|v| v * v).sum::<f32>().sqrt();
        assert!((norm - 1.0).abs() < 1e-6);
        a.embed_into(7, &mut z).unwrap();
        assert_eq!(x, z);
    }

    #[test]
    fn file_embedder_range() {
        let bytes = fble_bytes(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let e = FileEmbedder::from_bytes(&bytes, "t").unwrap();
        let mut out = [0.0; 2];
        e.embed_into(1, &mut out).unwrap();
        assert_eq!(out, [0.0, 1.0]);
        assert!(matches!(
            e.embed_into(2, &mut out),
            Err(EmbedError::TokenOutOfRange { token: 2, size: 2 })
        ));
        assert!(matches!(e.spec(), EmbedderSpec::File { d_in: 2, .. }));
    }
}
