use std::collections::HashMap;
use std::io::{Cursor, Write};

use serde::{Deserialize, Serialize};

use crate::binio::{self, FormatError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Query,
    Document,
}

/// Per-token embeddings of one query or document, row-major.
///
/// Rows are unit-norm, except for the (measure-zero) case of a token whose
/// projection vanished; such rows are all zeros and are skipped by scoring
/// and indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    pub kind: MatrixKind,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, data: Vec<f32>, kind: MatrixKind) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        assert_eq!(data.len() % dim, 0, "data length is not a multiple of dim");
        Self { dim, data, kind }
    }

    /// Build from raw rows, normalizing each one.
    pub fn from_rows_normalized<'a, I>(dim: usize, rows: I, kind: MatrixKind) -> Self
    where
        I: IntoIterator<Item = &'a [f32]>,
    {
        let mut data = Vec::new();
        for row in rows {
            assert_eq!(row.len(), dim);
            let start = data.len();
            data.extend_from_slice(row);
            normalize(&mut data[start..]);
        }
        Self::new(dim, data, kind)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }
}

pub(crate) fn is_zero_row(row: &[f32]) -> bool {
    row.iter().all(|&x| x == 0.0)
}

/// Scale to unit length; zero vectors stay zero.
pub fn normalize(v: &mut [f32]) {
    let norm = v
        .iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .sum::<f64>()
        .sqrt();
    if norm > 0.0 {
        for x in v.iter_mut() {
            *x = (f64::from(*x) / norm) as f32;
        }
    }
}

/// Document matrices keyed and ordered by doc id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocMatrices {
    ids: Vec<String>,
    matrices: Vec<EmbeddingMatrix>,
    lookup: HashMap<String, usize>,
}

impl DocMatrices {
    pub fn new(mut entries: Vec<(String, EmbeddingMatrix)>) -> Self {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        entries.dedup_by(|a, b| a.0 == b.0);
        let (ids, matrices): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let lookup = ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            ids,
            matrices,
            lookup,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, doc_id: &str) -> Option<&EmbeddingMatrix> {
        self.lookup.get(doc_id).map(|&i| &self.matrices[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.lookup.get(doc_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &EmbeddingMatrix)> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.matrices.iter())
    }

    pub fn total_rows(&self) -> usize {
        self.matrices.iter().map(EmbeddingMatrix::n_rows).sum()
    }

    /// Common row dimension, `None` when empty.
    pub fn dim(&self) -> Option<usize> {
        self.matrices.first().map(EmbeddingMatrix::dim)
    }

    /// Subset with the given positions, preserving order.
    pub fn subset(&self, positions: &[usize]) -> Self {
        Self::new(
            positions
                .iter()
                .map(|&p| (self.ids[p].clone(), self.matrices[p].clone()))
                .collect(),
        )
    }
}

const FBLE_MAGIC: &[u8; 4] = b"FBLE";
const FBLE_VERSION: u32 = 1;

/// `FBLE` file: magic, u32 version, u32 rows, u32 dim, rows×dim f32 (LE).
pub fn write_fble<W: Write>(
    w: &mut W,
    rows: usize,
    dim: usize,
    data: &[f32],
) -> std::io::Result<()> {
    assert_eq!(rows * dim, data.len());
    w.write_all(FBLE_MAGIC)?;
    binio::write_u32(w, FBLE_VERSION)?;
    binio::write_u32(w, rows as u32)?;
    binio::write_u32(w, dim as u32)?;
    binio::write_f32s(w, data)
}

pub fn fble_bytes(rows: usize, dim: usize, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len() * 4);
    write_fble(&mut out, rows, dim, data).expect("write to Vec");
    out
}

/// Parse an `FBLE` buffer into (rows, dim, data).
pub fn read_fble(bytes: &[u8], file: &str) -> Result<(usize, usize, Vec<f32>), FormatError> {
    let mut r = Cursor::new(bytes);
    binio::expect_magic(&mut r, FBLE_MAGIC, file)?;
    binio::expect_version(&mut r, FBLE_VERSION, file)?;
    let rows = binio::read_u32(&mut r, file)? as u64;
    let dim = binio::read_u32(&mut r, file)? as u64;
    let remaining = bytes.len() as u64 - r.position();
    let n = binio::checked_len(rows * dim, 4, Some(remaining), file)?;
    if remaining != n as u64 * 4 {
        return Err(FormatError::corrupt(
            file,
            "trailing bytes after matrix data",
        ));
    }
    let data = binio::read_f32s(&mut r, n, file)?;
    Ok((rows as usize, dim as usize, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fble_round_trip_and_guards() {
        let data: Vec<f32> = (0..6).map(|i| i as f32 * 0.5).collect();
        let bytes = fble_bytes(2, 3, &data);
        assert_eq!(&bytes[..4], b"FBLE");
        assert_eq!(read_fble(&bytes, "m").unwrap(), (2, 3, data));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(
            matches!(read_fble(&bad, "m.fble"), Err(FormatError::BadMagic { file, .. }) if file == "m.fble")
        );
        assert!(read_fble(&bytes[..bytes.len() - 1], "m").is_err());
    }

    #[test]
    fn doc_matrices_sorted_and_unique() {
        let m = |v: f32| EmbeddingMatrix::new(1, vec![v], MatrixKind::Document);
        let docs = DocMatrices::new(vec![
            ("b".into(), m(1.0)),
            ("a".into(), m(2.0)),
            ("b".into(), m(3.0)),
        ]);
        assert_eq!(docs.ids(), ["a", "b"]);
        assert_eq!(docs.get("a").unwrap().row(0), [2.0]);
        assert_eq!(docs.total_rows(), 2);
    }
}
