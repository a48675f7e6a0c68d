//! Run files: JSON lines and the TREC `qid Q0 docno rank score tag` layout.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{RankMode, RankedEntry, RankedResult, RetrieveError};
use crate::corpus::origin_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub bug_id: String,
    pub rank: usize,
    pub doc_id: String,
    pub changeset_id: String,
    pub score: f32,
}

impl RunRecord {
    pub fn from_result(result: &RankedResult) -> Vec<RunRecord> {
        result
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| RunRecord {
                bug_id: result.bug_id.clone(),
                rank: i + 1,
                doc_id: e.doc_id.clone(),
                changeset_id: origin_of(&e.doc_id).to_string(),
                score: e.score,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunFormat {
    Jsonl,
    Trec,
}

impl std::str::FromStr for RunFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "jsonl" => Ok(RunFormat::Jsonl),
            "trec" => Ok(RunFormat::Trec),
            _ => Err(format!("unknown run format {s:?} (expected jsonl or trec)")),
        }
    }
}

pub fn write_jsonl<W: Write>(w: &mut W, result: &RankedResult) -> std::io::Result<()> {
    for r in RunRecord::from_result(result) {
        serde_json::to_writer(&mut *w, &r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_trec<W: Write>(w: &mut W, result: &RankedResult, tag: &str) -> std::io::Result<()> {
    for (i, e) in result.entries.iter().enumerate() {
        writeln!(
            w,
            "{} Q0 {} {} {} {}",
            result.bug_id,
            e.doc_id,
            i + 1,
            e.score,
            tag
        )?;
    }
    Ok(())
}

fn bad(line: usize, message: impl Into<String>) -> RetrieveError {
    RetrieveError::RunFormat {
        line,
        message: message.into(),
    }
}

/// Parse a run in either format (detected per line: JSON objects start with
/// `{`). Entries are ordered by rank within each bug.
pub fn read_run(text: &str) -> Result<Vec<RankedResult>, RetrieveError> {
    let mut by_bug: BTreeMap<String, Vec<(usize, RankedEntry)>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (bug, rank, entry) = if line.starts_with('{') {
            let r: RunRecord = serde_json::from_str(line).map_err(|e| bad(n, e.to_string()))?;
            (
                r.bug_id,
                r.rank,
                RankedEntry {
                    doc_id: r.doc_id,
                    score: r.score,
                },
            )
        } else {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 6 {
                return Err(bad(n, format!("expected 6 fields, found {}", f.len())));
            }
            let rank = f[3]
                .parse()
                .map_err(|_| bad(n, format!("bad rank {:?}", f[3])))?;
            let score = f[4]
                .parse()
                .map_err(|_| bad(n, format!("bad score {:?}", f[4])))?;
            (
                f[0].to_string(),
                rank,
                RankedEntry {
                    doc_id: f[2].to_string(),
                    score,
                },
            )
        };
        if rank == 0 {
            return Err(bad(n, "ranks start at 1"));
        }
        by_bug.entry(bug).or_default().push((rank, entry));
    }
    Ok(by_bug
        .into_iter()
        .map(|(bug_id, mut entries)| {
            entries.sort_by_key(|e| e.0);
            RankedResult {
                bug_id,
                entries: entries.into_iter().map(|e| e.1).collect(),
                mode: RankMode::TwoStage,
            }
        })
        .collect())
}
