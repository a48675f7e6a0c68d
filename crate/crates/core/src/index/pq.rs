//! Product quantizer: `m` independent sub-quantizers of `k` centroids, one
//! byte of code per subspace.

use super::kmeans::{kmeans, nearest};
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq)]
pub struct PqCodebook {
    m: usize,
    k: usize,
    dsub: usize,
    /// `m × k × dsub`.
    centroids: Vec<f32>,
}

impl PqCodebook {
    pub fn from_parts(m: usize, k: usize, dsub: usize, centroids: Vec<f32>) -> Self {
        assert_eq!(centroids.len(), m * k * dsub);
        Self {
            m,
            k,
            dsub,
            centroids,
        }
    }

    /// Train on `vectors` (`n × m·dsub`). Each subspace gets its own seeded
    /// k-means run.
    pub fn train(
        vectors: &[f32],
        dim: usize,
        m: usize,
        k: usize,
        max_iters: usize,
        seed: u64,
    ) -> Self {
        assert!(
            m > 0 && dim % m == 0,
            "subspace count must divide the dimension"
        );
        assert!((1..=256).contains(&k), "codebook size must be in 1..=256");
        let dsub = dim / m;
        let n = vectors.len() / dim;
        let mut centroids = Vec::with_capacity(m * k * dsub);
        let mut sub = vec![0f32; n * dsub];
        for s in 0..m {
            for i in 0..n {
                sub[i * dsub..(i + 1) * dsub]
                    .copy_from_slice(&vectors[i * dim + s * dsub..i * dim + (s + 1) * dsub]);
            }
            let km = kmeans(&sub, dsub, k, max_iters, seed.wrapping_add(s as u64));
            centroids.extend_from_slice(&km.centroids);
        }
        Self {
            m,
            k,
            dsub,
            centroids,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dsub(&self) -> usize {
        self.dsub
    }

    pub fn dim(&self) -> usize {
        self.m * self.dsub
    }

    pub fn centroids(&self) -> &[f32] {
        &self.centroids
    }

    fn table(&self, s: usize) -> &[f32] {
        &self.centroids[s * self.k * self.dsub..(s + 1) * self.k * self.dsub]
    }

    pub fn centroid(&self, s: usize, code: u8) -> &[f32] {
        let t = self.table(s);
        &t[code as usize * self.dsub..(code as usize + 1) * self.dsub]
    }

    pub fn encode_into(&self, v: &[f32], codes: &mut [u8]) {
        for s in 0..self.m {
            let (c, _) = nearest(
                &v[s * self.dsub..(s + 1) * self.dsub],
                self.table(s),
                self.dsub,
            );
            codes[s] = c as u8;
        }
    }

    pub fn encode(&self, v: &[f32]) -> Vec<u8> {
        let mut codes = vec![0; self.m];
        self.encode_into(v, &mut codes);
        codes
    }

    pub fn decode(&self, codes: &[u8]) -> Vec<f32> {
        codes
            .iter()
            .enumerate()
            .flat_map(|(s, &c)| self.centroid(s, c).iter().copied())
            .collect()
    }

    /// Inner products of each query sub-vector with every sub-centroid,
    /// `m × k`.
    pub fn inner_product_table(&self, query: &[f32]) -> Vec<f32> {
        let mut lut = Vec::with_capacity(self.m * self.k);
        for s in 0..self.m {
            let q = &query[s * self.dsub..(s + 1) * self.dsub];
            lut.extend(self.table(s).chunks_exact(self.dsub).map(|c| dot(q, c)));
        }
        lut
    }
}
