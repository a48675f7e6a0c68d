//! JSON-lines corpus ingestion.
//!
//! Three files make up a corpus:
//!
//! * `changesets.jsonl`: `{"id", "log", "diff", "timestamp"}`
//! * `bugs.jsonl`: `{"id", "summary", "description", "opened_at"}`
//! * `links.jsonl`: `{"bug_id", "changeset_id"}`
//!
//! Timestamps are ISO-8601 / RFC 3339.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::diff::{parse_unified_diff, Changeset};
use super::docs::{explode, Document, Granularity};
use super::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugReport {
    pub bug_id: String,
    pub summary: String,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub opened_at: Option<DateTime<Utc>>,
}

impl BugReport {
    /// Summary followed by description; this is what gets embedded.
    pub fn query_text(&self) -> String {
        match (self.summary.is_empty(), self.description.is_empty()) {
            (_, true) => self.summary.clone(),
            (true, false) => self.description.clone(),
            (false, false) => format!("{}\n{}", self.summary, self.description),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GoldLink {
    pub bug_id: String,
    pub changeset_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChangesetRecord {
    id: String,
    #[serde(default)]
    log: String,
    diff: String,
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BugRecord {
    id: String,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    opened_at: Option<DateTime<Utc>>,
}

/// Parsed, cross-validated corpus.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub changesets: Vec<Changeset>,
    pub bugs: Vec<BugReport>,
    pub links: Vec<GoldLink>,
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Json {
            file: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(
    path: &Path,
    records: impl Iterator<Item = T>,
) -> Result<(), CorpusError> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, &r).expect("records serialize");
        out.push(b'\n');
    }
    std::fs::write(path, out).map_err(|e| CorpusError::io(path, e))
}

impl Corpus {
    /// Validate uniqueness of ids and that every link resolves.
    pub fn new(
        changesets: Vec<Changeset>,
        bugs: Vec<BugReport>,
        links: Vec<GoldLink>,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for cs in &changesets {
            if !seen.insert(cs.changeset_id.as_str()) {
                return Err(CorpusError::DuplicateId(cs.changeset_id.clone()));
            }
        }
        let mut bug_ids = HashSet::new();
        for b in &bugs {
            if !bug_ids.insert(b.bug_id.as_str()) {
                return Err(CorpusError::DuplicateId(b.bug_id.clone()));
            }
        }
        for link in &links {
            if !bug_ids.contains(link.bug_id.as_str()) {
                return Err(CorpusError::UnknownBug(link.bug_id.clone()));
            }
            if !seen.contains(link.changeset_id.as_str()) {
                return Err(CorpusError::UnknownChangeset(link.changeset_id.clone()));
            }
        }
        Ok(Self {
            changesets,
            bugs,
            links,
        })
    }

    pub fn load_jsonl(changesets: &Path, bugs: &Path, links: &Path) -> Result<Self, CorpusError> {
        let changesets = read_jsonl::<ChangesetRecord>(changesets)?
            .into_iter()
            .map(|r| {
                let mut cs = parse_unified_diff(&r.diff, &r.id, &r.log).map_err(|e| match e {
                    CorpusError::MalformedDiff { line, message, .. } => {
                        CorpusError::MalformedDiff {
                            changeset: Some(r.id.clone()),
                            line,
                            message,
                        }
                    }
                    other => other,
                })?;
                cs.committed_at = r.timestamp;
                Ok(cs)
            })
            .collect::<Result<Vec<_>, CorpusError>>()?;
        let bugs = read_jsonl::<BugRecord>(bugs)?
            .into_iter()
            .map(|r| BugReport {
                bug_id: r.id,
                summary: r.summary,
                description: r.description,
                opened_at: r.opened_at,
            })
            .collect();
        let links = read_jsonl::<GoldLink>(links)?;
        Self::new(changesets, bugs, links)
    }

    /// Write the three JSON-lines files `load_jsonl` reads.
    pub fn write_jsonl(
        &self,
        changesets: &Path,
        bugs: &Path,
        links: &Path,
    ) -> Result<(), CorpusError> {
        let cs = self.changesets.iter().map(|c| ChangesetRecord {
            id: c.changeset_id.clone(),
            log: c.log_message.clone(),
            diff: c.to_unified_diff(),
            timestamp: c.committed_at,
        });
        write_jsonl(changesets, cs)?;
        let bs = self.bugs.iter().map(|b| BugRecord {
            id: b.bug_id.clone(),
            summary: b.summary.clone(),
            description: b.description.clone(),
            opened_at: b.opened_at,
        });
        write_jsonl(bugs, bs)?;
        write_jsonl(links, self.links.iter())
    }

    /// Content hash over the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("corpus serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn documents(&self, granularity: Granularity) -> Vec<Document> {
        self.changesets
            .iter()
            .flat_map(|cs| explode(cs, granularity))
            .collect()
    }

    pub fn bug(&self, bug_id: &str) -> Option<&BugReport> {
        self.bugs.iter().find(|b| b.bug_id == bug_id)
    }

    pub fn changeset(&self, id: &str) -> Option<&Changeset> {
        self.changesets.iter().find(|c| c.changeset_id == id)
    }

    /// bug_id → set of relevant changeset ids.
    pub fn qrels(&self) -> BTreeMap<String, BTreeSet<String>> {
        qrels_from_links(&self.links)
    }

    /// Simple class names of all files touched by the bug's gold changesets.
    pub fn gold_class_names(&self, bug_id: &str) -> BTreeSet<String> {
        let by_id: HashMap<&str, &Changeset> = self
            .changesets
            .iter()
            .map(|c| (c.changeset_id.as_str(), c))
            .collect();
        self.links
            .iter()
            .filter(|l| l.bug_id == bug_id)
            .filter_map(|l| by_id.get(l.changeset_id.as_str()))
            .flat_map(|cs| cs.files.iter().map(|f| f.class_name().to_string()))
            .collect()
    }
}

pub fn qrels_from_links(links: &[GoldLink]) -> BTreeMap<String, BTreeSet<String>> {
    let mut out: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for l in links {
        out.entry(l.bug_id.clone())
            .or_default()
            .insert(l.changeset_id.clone());
    }
    out
}

pub fn read_links(path: &Path) -> Result<Vec<GoldLink>, CorpusError> {
    read_jsonl(path)
}

pub fn read_bugs(path: &Path) -> Result<Vec<BugReport>, CorpusError> {
    Ok(read_jsonl::<BugRecord>(path)?
        .into_iter()
        .map(|r| BugReport {
            bug_id: r.id,
            summary: r.summary,
            description: r.description,
            opened_at: r.opened_at,
        })
        .collect())
}
