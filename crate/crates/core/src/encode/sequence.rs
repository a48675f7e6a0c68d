use serde::{Deserialize, Serialize};

use super::vocab::{Special, Vocabulary};
use super::EncodeError;
use crate::corpus::{BugReport, Document, LineKind};

/// How modification kinds are surfaced to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// `[D]` then all lines in order, kinds discarded.
    D,
    /// Lines grouped by kind: `[A] added… [R] removed… [C] context…`.
    Arc,
    /// Lines in order, a kind marker wherever the kind changes.
    #[serde(rename = "arcl")]
    ArcL,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::D => "d",
            Strategy::Arc => "arc",
            Strategy::ArcL => "arcl",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d" => Ok(Strategy::D),
            "arc" => Ok(Strategy::Arc),
            "arcl" | "arc_l" => Ok(Strategy::ArcL),
            other => Err(format!(
                "unknown strategy {other:?} (expected d, arc or arcl)"
            )),
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Fixed-length model input: `[CLS] … [SEP] [PAD]*`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodedSequence {
    pub ids: Vec<u32>,
    /// Tokens before the padding, `[CLS]` and `[SEP]` included.
    pub real_length: usize,
    pub limit: usize,
}

impl EncodedSequence {
    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_length]
    }

    /// `content` must not include `[CLS]`; it is truncated so that `[SEP]`
    /// always fits.
    fn finish(mut content: Vec<u32>, vocab: &Vocabulary, limit: usize) -> Self {
        content.insert(0, vocab.special(Special::Cls));
        content.truncate(limit - 1);
        content.push(vocab.special(Special::Sep));
        let real_length = content.len();
        content.resize(limit, vocab.special(Special::Pad));
        EncodedSequence {
            ids: content,
            real_length,
            limit,
        }
    }
}

fn marker(kind: LineKind) -> Special {
    match kind {
        LineKind::Added => Special::Added,
        LineKind::Removed => Special::Removed,
        LineKind::Context => Special::Context,
    }
}

pub const MIN_DOCUMENT_LIMIT: usize = 4;
pub const MIN_QUERY_LIMIT: usize = 3;

pub fn encode_document(
    doc: &Document,
    strategy: Strategy,
    vocab: &Vocabulary,
    limit: usize,
) -> Result<EncodedSequence, EncodeError> {
    if limit < MIN_DOCUMENT_LIMIT {
        return Err(EncodeError::LimitTooSmall {
            limit,
            min: MIN_DOCUMENT_LIMIT,
        });
    }
    let mut content = Vec::new();
    match strategy {
        Strategy::D => {
            content.push(vocab.special(Special::Document));
            for line in doc.lines() {
                content.extend(vocab.tokenize(&line.text));
            }
        }
        Strategy::Arc => {
            for kind in [LineKind::Added, LineKind::Removed, LineKind::Context] {
                content.push(vocab.special(marker(kind)));
                for line in doc.lines().filter(|l| l.kind == kind) {
                    content.extend(vocab.tokenize(&line.text));
                }
            }
        }
        Strategy::ArcL => {
            let mut prev = None;
            for line in doc.lines() {
                if prev != Some(line.kind) {
                    content.push(vocab.special(marker(line.kind)));
                    prev = Some(line.kind);
                }
                content.extend(vocab.tokenize(&line.text));
            }
        }
    }
    Ok(EncodedSequence::finish(content, vocab, limit))
}

pub fn encode_query(
    report: &BugReport,
    vocab: &Vocabulary,
    limit: usize,
) -> Result<EncodedSequence, EncodeError> {
    encode_query_text(&report.query_text(), vocab, limit)
}

pub fn encode_query_text(
    text: &str,
    vocab: &Vocabulary,
    limit: usize,
) -> Result<EncodedSequence, EncodeError> {
    if limit < MIN_QUERY_LIMIT {
        return Err(EncodeError::LimitTooSmall {
            limit,
            min: MIN_QUERY_LIMIT,
        });
    }
    let mut content = vec![vocab.special(Special::Query)];
    content.extend(vocab.tokenize(text));
    Ok(EncodedSequence::finish(content, vocab, limit))
}
