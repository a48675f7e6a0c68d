use serde::{Deserialize, Serialize};

use super::diff::{Changeset, DiffLine, FileDiff, Hunk};

/// Retrieval unit granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Changeset,
    #[serde(rename = "file")]
    ChangesetFile,
    Hunk,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Changeset => "changeset",
            Granularity::ChangesetFile => "file",
            Granularity::Hunk => "hunk",
        }
    }
}

impl std::str::FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "changeset" | "commit" => Ok(Granularity::Changeset),
            "file" | "changeset-file" | "changesetfile" => Ok(Granularity::ChangesetFile),
            "hunk" => Ok(Granularity::Hunk),
            other => Err(format!(
                "unknown granularity {other:?} (expected changeset, file or hunk)"
            )),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum Payload {
    Changeset(Changeset),
    File(FileDiff),
    Hunk(Hunk),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub origin_changeset: String,
    pub payload: Payload,
}

impl Document {
    pub fn granularity(&self) -> Granularity {
        match self.payload {
            Payload::Changeset(_) => Granularity::Changeset,
            Payload::File(_) => Granularity::ChangesetFile,
            Payload::Hunk(_) => Granularity::Hunk,
        }
    }

    /// Payload lines in original diff order.
    pub fn lines(&self) -> Box<dyn Iterator<Item = &DiffLine> + '_> {
        match &self.payload {
            Payload::Changeset(cs) => Box::new(cs.lines()),
            Payload::File(f) => Box::new(f.hunks.iter().flat_map(|h| h.lines.iter())),
            Payload::Hunk(h) => Box::new(h.lines.iter()),
        }
    }
}

/// `<changeset_id>:<file_idx>:<hunk_idx>`, `*` for levels above the granularity.
pub fn doc_id(changeset_id: &str, file: Option<usize>, hunk: Option<usize>) -> String {
    let part = |i: Option<usize>| i.map_or_else(|| "*".to_string(), |i| i.to_string());
    format!("{changeset_id}:{}:{}", part(file), part(hunk))
}

/// Changeset id encoded in a document id.
pub fn origin_of(doc_id: &str) -> &str {
    let mut parts = doc_id.rsplitn(3, ':');
    parts.next();
    parts.next();
    parts.next().unwrap_or(doc_id)
}

/// Split a changeset into retrieval documents. Files without hunks
/// (binary, pure renames) never become file or hunk documents.
pub fn explode(cs: &Changeset, granularity: Granularity) -> Vec<Document> {
    let id = &cs.changeset_id;
    match granularity {
        Granularity::Changeset => vec![Document {
            doc_id: doc_id(id, None, None),
            origin_changeset: id.clone(),
            payload: Payload::Changeset(cs.clone()),
        }],
        Granularity::ChangesetFile => cs
            .files
            .iter()
            .enumerate()
            .filter(|(_, f)| !f.hunks.is_empty())
            .map(|(fi, f)| Document {
                doc_id: doc_id(id, Some(fi), None),
                origin_changeset: id.clone(),
                payload: Payload::File(f.clone()),
            })
            .collect(),
        Granularity::Hunk => cs
            .files
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| {
                f.hunks.iter().enumerate().map(move |(hi, h)| Document {
                    doc_id: doc_id(id, Some(fi), Some(hi)),
                    origin_changeset: id.clone(),
                    payload: Payload::Hunk(h.clone()),
                })
            })
            .collect(),
    }
}
