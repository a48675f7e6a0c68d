//! MaxSim scoring, the exhaustive ranking oracle and two-stage retrieval.

mod runfile;

pub use runfile::{read_run, write_jsonl, write_trec, RunFormat, RunRecord};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::origin_of;
use crate::embed::{is_zero_row, DocMatrices, EmbeddingMatrix};
use crate::index::{IndexError, IvfPqIndex};
use crate::linalg::dot;

#[derive(Debug, thiserror::Error)]
pub enum RetrieveError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("no documents to rank")]
    NoDocuments,
    #[error("candidate {0} missing from document matrices")]
    MissingDocument(String),
    #[error("run file line {line}: {message}")]
    RunFormat { line: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Sum over query rows of the best inner product against any document row.
///
/// Zero rows on either side are ignored. A document without scorable rows
/// gets `−∞`.
pub fn maxsim(q: &EmbeddingMatrix, d: &EmbeddingMatrix) -> f32 {
    assert_eq!(q.dim(), d.dim(), "query and document dimensions differ");
    let doc_rows: Vec<&[f32]> = d.rows().filter(|r| !is_zero_row(r)).collect();
    if doc_rows.is_empty() {
        return f32::NEG_INFINITY;
    }
    let mut total = 0f32;
    for qr in q.rows() {
        if is_zero_row(qr) {
            continue;
        }
        let mut best = f32::NEG_INFINITY;
        for dr in &doc_rows {
            let s = dot(qr, dr);
            if s > best {
                best = s;
            }
        }
        total += best;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    Exact,
    TwoStage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub bug_id: String,
    pub entries: Vec<RankedEntry>,
    pub mode: RankMode,
}

impl RankedResult {
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn truncate(&mut self, k: usize) {
        self.entries.truncate(k);
    }
}

fn sort_entries(entries: &mut [RankedEntry]) {
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
}

fn score_all<'a>(
    q: &EmbeddingMatrix,
    docs: impl Iterator<Item = (&'a str, &'a EmbeddingMatrix)>,
) -> Vec<RankedEntry> {
    let mut entries: Vec<RankedEntry> = docs
        .map(|(id, d)| RankedEntry {
            doc_id: id.to_string(),
            score: maxsim(q, d),
        })
        .filter(|e| e.score != f32::NEG_INFINITY)
        .collect();
    sort_entries(&mut entries);
    entries
}

/// Score every document. Unscorable documents are left out.
pub fn rank_exact(
    bug_id: &str,
    q: &EmbeddingMatrix,
    docs: &DocMatrices,
) -> Result<RankedResult, RetrieveError> {
    if docs.is_empty() {
        return Err(RetrieveError::NoDocuments);
    }
    Ok(RankedResult {
        bug_id: bug_id.to_string(),
        entries: score_all(q, docs.iter()),
        mode: RankMode::Exact,
    })
}

/// Fetch candidates from the index, rescore them exactly and keep the best
/// `k`.
pub fn rank_two_stage(
    bug_id: &str,
    q: &EmbeddingMatrix,
    index: &IvfPqIndex,
    docs: &DocMatrices,
    n_prime: usize,
    nprobe: usize,
    k: usize,
) -> Result<RankedResult, RetrieveError> {
    let candidates = index.candidate_docs(q, n_prime, nprobe)?;
    let mut matrices = Vec::with_capacity(candidates.len());
    for c in &candidates {
        let m = docs
            .get(c)
            .ok_or_else(|| RetrieveError::MissingDocument(c.clone()))?;
        matrices.push((c.as_str(), m));
    }
    let mut entries = score_all(q, matrices.into_iter());
    entries.truncate(k);
    Ok(RankedResult {
        bug_id: bug_id.to_string(),
        entries,
        mode: RankMode::TwoStage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Max,
    Sum,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(Aggregation::Max),
            "sum" => Ok(Aggregation::Sum),
            _ => Err(format!("unknown aggregation {s:?} (expected max or sum)")),
        }
    }
}

/// Collapse hunk or file results onto their changesets.
pub fn aggregate_to_changeset(result: &RankedResult, how: Aggregation) -> RankedResult {
    let mut order: Vec<String> = Vec::new();
    let mut scores: HashMap<&str, f32> = HashMap::new();
    for e in &result.entries {
        let cs = origin_of(&e.doc_id);
        match scores.get_mut(cs) {
            Some(s) => match how {
                Aggregation::Max => *s = s.max(e.score),
                Aggregation::Sum => *s += e.score,
            },
            None => {
                scores.insert(cs, e.score);
                order.push(cs.to_string());
            }
        }
    }
    let mut entries: Vec<RankedEntry> = order
        .into_iter()
        .map(|cs| {
            let score = scores[cs.as_str()];
            RankedEntry { doc_id: cs, score }
        })
        .collect();
    sort_entries(&mut entries);
    RankedResult {
        bug_id: result.bug_id.clone(),
        entries,
        mode: result.mode,
    }
}
