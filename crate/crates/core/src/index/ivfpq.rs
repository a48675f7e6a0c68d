//! Inverted-file index over product-quantized residuals.
//!
//! Every token row of every document is assigned to its nearest coarse
//! centroid; the residual `row − centroid` is PQ-encoded and appended to that
//! partition's list. A query row probes the `nprobe` closest partitions and
//! scores codes with asymmetric inner products:
//! `⟨q, c_p⟩ + Σ_s ⟨q_s, codebook_s[code_s]⟩`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::io::{Cursor, Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest, DEFAULT_MAX_ITERS};
use super::pq::PqCodebook;
use super::IndexError;
use crate::binio::{self, FormatError};
use crate::embed::{is_zero_row, DocMatrices, EmbeddingMatrix};
use crate::linalg::{dot, l2_sq};

/// Training rows above which coarse and PQ training use a seeded subsample.
pub const MAX_TRAINING_ROWS: usize = 256_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexParams {
    pub partitions: usize,
    pub subspaces: usize,
    pub codebook_size: usize,
    pub seed: u64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self {
            partitions: 320,
            subspaces: 16,
            codebook_size: 256,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub doc: u32,
    pub position: u32,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct InvertedList {
    ids: Vec<u64>,
    /// `ids.len() × m` bytes.
    codes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfPqIndex {
    dim: usize,
    coarse: Vec<f32>,
    pq: PqCodebook,
    lists: Vec<InvertedList>,
    /// Indexed by embedding id.
    registry: Vec<RegistryEntry>,
    doc_ids: Vec<String>,
}

/// One scored embedding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub embedding_id: u64,
    pub score: f32,
}

impl Eq for Hit {}

impl Ord for Hit {
    /// Greater means better: higher score, then lower id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.embedding_id.cmp(&self.embedding_id))
    }
}

impl PartialOrd for Hit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Keeps the best `k` hits seen.
struct TopK {
    k: usize,
    heap: BinaryHeap<std::cmp::Reverse<Hit>>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            heap: BinaryHeap::with_capacity(k.min(1 << 16) + 1),
        }
    }

    #[inline]
    fn push(&mut self, hit: Hit) {
        if self.k == 0 {
            return;
        }
        if self.heap.len() < self.k {
            self.heap.push(std::cmp::Reverse(hit));
        } else if let Some(worst) = self.heap.peek() {
            if hit > worst.0 {
                self.heap.pop();
                self.heap.push(std::cmp::Reverse(hit));
            }
        }
    }

    fn into_sorted(self) -> Vec<Hit> {
        let mut v: Vec<Hit> = self.heap.into_iter().map(|r| r.0).collect();
        v.sort_by(|a, b| b.cmp(a));
        v
    }
}

/// Sum of the table entries selected by `code`, accumulated in four
/// interleaved partial sums to shorten the dependency chain. Full 256-entry
/// tables let a byte index them without bounds checks.
#[inline]
fn adc(tables: &[[f32; 256]], code: &[u8]) -> f32 {
    let mut acc = [0f32; 4];
    let (tc, cc) = (tables.chunks_exact(4), code.chunks_exact(4));
    let (tr, cr) = (tc.remainder(), cc.remainder());
    for (t, c) in tc.zip(cc) {
        acc[0] += t[0][c[0] as usize];
        acc[1] += t[1][c[1] as usize];
        acc[2] += t[2][c[2] as usize];
        acc[3] += t[3][c[3] as usize];
    }
    for (j, (t, &c)) in tr.iter().zip(cr).enumerate() {
        acc[j] += t[c as usize];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3])
}

impl IvfPqIndex {
    /// Build over every non-zero row of `docs`.
    pub fn build(docs: &DocMatrices, params: &IndexParams) -> Result<Self, IndexError> {
        let dim = docs.dim().ok_or(IndexError::InsufficientData {
            rows: 0,
            partitions: params.partitions,
        })?;
        if params.partitions == 0 {
            return Err(IndexError::InvalidParams(
                "partition count must be positive".into(),
            ));
        }
        if params.subspaces == 0 || dim % params.subspaces != 0 {
            return Err(IndexError::InvalidParams(format!(
                "subspace count {} must divide dimension {dim}",
                params.subspaces
            )));
        }
        if !(1..=256).contains(&params.codebook_size) {
            return Err(IndexError::InvalidParams(
                "codebook size must be in 1..=256".into(),
            ));
        }

        let mut rows = Vec::new();
        let mut registry = Vec::new();
        for (doc_idx, (_, m)) in docs.iter().enumerate() {
            if m.dim() != dim {
                return Err(IndexError::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            for (pos, r) in m.rows().enumerate() {
                if is_zero_row(r) {
                    continue;
                }
                rows.extend_from_slice(r);
                registry.push(RegistryEntry {
                    doc: doc_idx as u32,
                    position: pos as u32,
                });
            }
        }
        let n = registry.len();
        if n < params.partitions {
            return Err(IndexError::InsufficientData {
                rows: n,
                partitions: params.partitions,
            });
        }

        let sample: Vec<f32> = if n > MAX_TRAINING_ROWS {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5EED_5A4D_0000_0001);
            let mut picked = rand::seq::index::sample(&mut rng, n, MAX_TRAINING_ROWS).into_vec();
            picked.sort_unstable();
            picked
                .into_iter()
                .flat_map(|i| rows[i * dim..(i + 1) * dim].iter().copied())
                .collect()
        } else {
            rows.clone()
        };

        let coarse = kmeans(
            &sample,
            dim,
            params.partitions,
            DEFAULT_MAX_ITERS,
            params.seed,
        );
        let mut residuals = sample;
        for (i, r) in residuals.chunks_exact_mut(dim).enumerate() {
            let c = coarse.centroid(coarse.assignments[i] as usize);
            for (x, y) in r.iter_mut().zip(c) {
                *x -= y;
            }
        }
        let pq = PqCodebook::train(
            &residuals,
            dim,
            params.subspaces,
            params.codebook_size,
            DEFAULT_MAX_ITERS,
            params.seed.wrapping_add(1),
        );

        let m = params.subspaces;
        let mut lists = vec![InvertedList::default(); params.partitions];
        let mut residual = vec![0f32; dim];
        let mut codes = vec![0u8; m];
        for (id, r) in rows.chunks_exact(dim).enumerate() {
            let (p, _) = nearest(r, &coarse.centroids, dim);
            for ((o, x), c) in residual.iter_mut().zip(r).zip(coarse.centroid(p)) {
                *o = x - c;
            }
            pq.encode_into(&residual, &mut codes);
            lists[p].ids.push(id as u64);
            lists[p].codes.extend_from_slice(&codes);
        }

        Ok(Self {
            dim,
            coarse: coarse.centroids,
            pq,
            lists,
            registry,
            doc_ids: docs.ids().to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn partitions(&self) -> usize {
        self.lists.len()
    }

    pub fn subspaces(&self) -> usize {
        self.pq.m()
    }

    pub fn codebook_size(&self) -> usize {
        self.pq.k()
    }

    pub fn len(&self) -> usize {
        self.registry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.registry.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn coarse_centroid(&self, p: usize) -> &[f32] {
        &self.coarse[p * self.dim..(p + 1) * self.dim]
    }

    pub fn partition_sizes(&self) -> Vec<usize> {
        self.lists.iter().map(|l| l.ids.len()).collect()
    }

    /// (doc id, token position) of an embedding.
    pub fn resolve(&self, embedding_id: u64) -> Option<(&str, u32)> {
        let e = self.registry.get(embedding_id as usize)?;
        Some((self.doc_ids[e.doc as usize].as_str(), e.position))
    }

    /// Decoded approximation of every stored embedding, by id.
    pub fn reconstruct_all(&self) -> Vec<Vec<f32>> {
        let m = self.pq.m();
        let mut out = vec![Vec::new(); self.len()];
        for (p, list) in self.lists.iter().enumerate() {
            let c = self.coarse_centroid(p);
            for (i, &id) in list.ids.iter().enumerate() {
                let mut v = self.pq.decode(&list.codes[i * m..(i + 1) * m]);
                v.iter_mut().zip(c).for_each(|(x, y)| *x += y);
                out[id as usize] = v;
            }
        }
        out
    }

    /// Mean squared reconstruction error against the rows the index was
    /// built from.
    pub fn reconstruction_mse(&self, docs: &DocMatrices) -> f64 {
        let rec = self.reconstruct_all();
        let mut total = 0.0;
        for (id, e) in self.registry.iter().enumerate() {
            let m = docs
                .get(&self.doc_ids[e.doc as usize])
                .expect("index built from these documents");
            total += f64::from(l2_sq(m.row(e.position as usize), &rec[id]));
        }
        total / self.len().max(1) as f64
    }

    /// Partitions ordered by distance to `query`, closest first.
    fn probe_order(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut d: Vec<(f32, usize)> = self
            .coarse
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(p, c)| (l2_sq(query, c), p))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        d.into_iter().take(nprobe).map(|(_, p)| p).collect()
    }

    fn check_query(&self, query: &[f32], nprobe: usize) -> Result<(), IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        if query.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        if nprobe == 0 || nprobe > self.partitions() {
            return Err(IndexError::InvalidParams(format!(
                "nprobe {nprobe} outside 1..={}",
                self.partitions()
            )));
        }
        Ok(())
    }

    /// Top `topk` embeddings by approximate inner product, best first, ties
    /// by embedding id.
    pub fn search(
        &self,
        query: &[f32],
        nprobe: usize,
        topk: usize,
    ) -> Result<Vec<Hit>, IndexError> {
        self.check_query(query, nprobe)?;
        let m = self.pq.m();
        let k = self.pq.k();
        let mut tables = vec![[0f32; 256]; m];
        for (t, row) in tables
            .iter_mut()
            .zip(self.pq.inner_product_table(query).chunks_exact(k))
        {
            t[..k].copy_from_slice(row);
        }
        let mut top = TopK::new(topk);
        for p in self.probe_order(query, nprobe) {
            let list = &self.lists[p];
            let base = dot(query, self.coarse_centroid(p));
            for (&id, code) in list.ids.iter().zip(list.codes.chunks_exact(m)) {
                let score = base + adc(&tables, code);
                top.push(Hit {
                    embedding_id: id,
                    score,
                });
            }
        }
        Ok(top.into_sorted())
    }

    /// Unique documents owning the best-scoring embeddings of any query row.
    ///
    /// The `n_prime` budget is split evenly over the scorable query rows; a
    /// budget covering the whole index makes every row fetch everything.
    /// Documents are ordered by their best hit.
    pub fn candidate_docs(
        &self,
        query: &EmbeddingMatrix,
        n_prime: usize,
        nprobe: usize,
    ) -> Result<Vec<String>, IndexError> {
        if self.is_empty() {
            return Err(IndexError::EmptyIndex);
        }
        let rows: Vec<&[f32]> = query.rows().filter(|r| !is_zero_row(r)).collect();
        if rows.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        let per_row = if n_prime >= self.len() {
            self.len()
        } else {
            n_prime.div_ceil(rows.len())
        };
        let mut hits = Vec::new();
        for r in rows {
            hits.extend(self.search(r, nprobe, per_row)?);
        }
        hits.sort_by(|a, b| b.cmp(a));
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for h in hits {
            let doc = self.registry[h.embedding_id as usize].doc;
            if seen.insert(doc) {
                out.push(self.doc_ids[doc as usize].clone());
            }
        }
        Ok(out)
    }
}

const FBLI_MAGIC: &[u8; 4] = b"FBLI";
const FBLI_VERSION: u32 = 1;

impl IvfPqIndex {
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let m = self.pq.m();
        w.write_all(FBLI_MAGIC)?;
        binio::write_u32(w, FBLI_VERSION)?;
        binio::write_u32(w, self.partitions() as u32)?;
        binio::write_u32(w, m as u32)?;
        binio::write_u32(w, self.pq.k() as u32)?;
        binio::write_u32(w, self.dim as u32)?;
        binio::write_f32s(w, &self.coarse)?;
        binio::write_f32s(w, self.pq.centroids())?;
        for list in &self.lists {
            binio::write_u64(w, list.ids.len() as u64)?;
            for (i, &id) in list.ids.iter().enumerate() {
                binio::write_u64(w, id)?;
                w.write_all(&list.codes[i * m..(i + 1) * m])?;
            }
        }
        binio::write_u64(w, self.registry.len() as u64)?;
        for (id, e) in self.registry.iter().enumerate() {
            binio::write_u64(w, id as u64)?;
            binio::write_u32(w, e.doc)?;
            binio::write_u32(w, e.position)?;
        }
        binio::write_u64(w, self.doc_ids.len() as u64)?;
        for d in &self.doc_ids {
            binio::write_string(w, d)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("write to Vec");
        out
    }

    pub fn from_bytes(bytes: &[u8], file: &str) -> Result<Self, FormatError> {
        let total = bytes.len() as u64;
        let mut r = Cursor::new(bytes);
        let rem = |r: &Cursor<&[u8]>| Some(total - r.position());
        binio::expect_magic(&mut r, FBLI_MAGIC, file)?;
        binio::expect_version(&mut r, FBLI_VERSION, file)?;
        let p = binio::read_u32(&mut r, file)? as u64;
        let m = binio::read_u32(&mut r, file)? as u64;
        let k = binio::read_u32(&mut r, file)? as u64;
        let dim = binio::read_u32(&mut r, file)? as u64;
        if p == 0 || m == 0 || dim == 0 || dim % m != 0 || !(1..=256).contains(&k) {
            return Err(FormatError::corrupt(file, "invalid index header"));
        }
        let n = binio::checked_len(p * dim, 4, rem(&r), file)?;
        let coarse = binio::read_f32s(&mut r, n, file)?;
        let n = binio::checked_len(m * k * (dim / m), 4, rem(&r), file)?;
        let codebook = binio::read_f32s(&mut r, n, file)?;
        let pq = PqCodebook::from_parts(m as usize, k as usize, (dim / m) as usize, codebook);

        let mut lists = Vec::with_capacity(p as usize);
        let mut total_entries = 0usize;
        for _ in 0..p {
            let len = binio::read_u64(&mut r, file)?;
            let len = binio::checked_len(len, 8 + m, rem(&r), file)?;
            let mut list = InvertedList {
                ids: Vec::with_capacity(len),
                codes: vec![0; len * m as usize],
            };
            for i in 0..len {
                list.ids.push(binio::read_u64(&mut r, file)?);
                r.read_exact(&mut list.codes[i * m as usize..(i + 1) * m as usize])
                    .map_err(|e| FormatError::io(file, e))?;
                if list.codes[i * m as usize..(i + 1) * m as usize]
                    .iter()
                    .any(|&c| u64::from(c) >= k)
                {
                    return Err(FormatError::corrupt(file, "PQ code outside codebook"));
                }
            }
            total_entries += len;
            lists.push(list);
        }

        let count = binio::read_u64(&mut r, file)?;
        let count = binio::checked_len(count, 16, rem(&r), file)?;
        if count != total_entries {
            return Err(FormatError::corrupt(
                file,
                "registry size differs from inverted lists",
            ));
        }
        let mut registry = vec![None; count];
        for _ in 0..count {
            let id = binio::read_u64(&mut r, file)? as usize;
            let doc = binio::read_u32(&mut r, file)?;
            let position = binio::read_u32(&mut r, file)?;
            let slot = registry
                .get_mut(id)
                .ok_or_else(|| FormatError::corrupt(file, "embedding id out of range"))?;
            if slot.is_some() {
                return Err(FormatError::corrupt(
                    file,
                    "duplicate embedding id in registry",
                ));
            }
            *slot = Some(RegistryEntry { doc, position });
        }
        let registry: Vec<RegistryEntry> = registry.into_iter().map(Option::unwrap).collect();
        let mut listed = vec![false; count];
        for list in &lists {
            for &id in &list.ids {
                match listed.get_mut(id as usize) {
                    Some(seen @ false) => *seen = true,
                    _ => {
                        return Err(FormatError::corrupt(
                            file,
                            "inverted lists do not cover each embedding once",
                        ))
                    }
                }
            }
        }

        let n_docs = binio::read_u64(&mut r, file)?;
        let n_docs = binio::checked_len(n_docs, 4, rem(&r), file)?;
        let mut doc_ids = Vec::with_capacity(n_docs);
        for _ in 0..n_docs {
            doc_ids.push(binio::read_string(&mut r, file)?);
        }
        if registry.iter().any(|e| e.doc as usize >= n_docs) {
            return Err(FormatError::corrupt(
                file,
                "registry references unknown document",
            ));
        }
        if r.position() != total {
            return Err(FormatError::corrupt(file, "trailing bytes after index"));
        }
        Ok(Self {
            dim: dim as usize,
            coarse,
            pq,
            lists,
            registry,
            doc_ids,
        })
    }
}
