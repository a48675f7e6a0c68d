//! Unified diff parsing into the changeset model.
//!
//! The parser understands `git diff` output: `diff --git` file headers, the
//! extended header block (`index`, mode changes, renames, binary markers),
//! `---`/`+++` path lines and `@@ -a,b +c,d @@` hunk headers. Plain unified
//! diffs without the `diff --git` line are accepted too; a `---` line outside
//! a hunk starts a new file in that case.
//!
//! Hunk bodies are consumed by line count, so payload lines that happen to
//! look like headers (`--- a comment` removed from a SQL file, say) are
//! classified correctly.

use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::CorpusError;

/// Modification kind of one payload line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LineKind {
    Added,
    Removed,
    Context,
}

impl LineKind {
    pub fn marker(self) -> char {
        match self {
            LineKind::Added => '+',
            LineKind::Removed => '-',
            LineKind::Context => ' ',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffLine {
    pub kind: LineKind,
    /// Line content with the marker character stripped.
    pub text: String,
}

impl DiffLine {
    pub fn new(kind: LineKind, text: impl Into<String>) -> Self {
        Self {
            kind,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hunk {
    pub old_start: u32,
    pub new_start: u32,
    pub lines: Vec<DiffLine>,
}

impl Hunk {
    pub fn old_len(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.kind != LineKind::Added)
            .count()
    }

    pub fn new_len(&self) -> usize {
        self.lines
            .iter()
            .filter(|l| l.kind != LineKind::Removed)
            .count()
    }

    pub fn has_changes(&self) -> bool {
        self.lines.iter().any(|l| l.kind != LineKind::Context)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDiff {
    pub path: String,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    /// Simple class name of the file: basename without extension.
    pub fn class_name(&self) -> &str {
        class_name_of(&self.path)
    }
}

/// Basename of `path` with its last extension removed.
pub fn class_name_of(path: &str) -> &str {
    let base = path.rsplit('/').next().unwrap_or(path);
    match base.rfind('.') {
        Some(0) | None => base,
        Some(dot) => &base[..dot],
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Changeset {
    pub changeset_id: String,
    pub log_message: String,
    pub files: Vec<FileDiff>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub committed_at: Option<DateTime<Utc>>,
}

impl Changeset {
    /// All payload lines in diff order.
    pub fn lines(&self) -> impl Iterator<Item = &DiffLine> {
        self.files
            .iter()
            .flat_map(|f| f.hunks.iter())
            .flat_map(|h| h.lines.iter())
    }

    /// Render back to `git diff` format. Parsing the output yields an equal
    /// changeset (log message and timestamp aside, which diffs do not carry).
    pub fn to_unified_diff(&self) -> String {
        let mut out = String::new();
        for file in &self.files {
            let _ = writeln!(out, "diff --git a/{0} b/{0}", file.path);
            if file.hunks.is_empty() {
                continue;
            }
            let _ = writeln!(out, "--- a/{}", file.path);
            let _ = writeln!(out, "+++ b/{}", file.path);
            for hunk in &file.hunks {
                let _ = writeln!(
                    out,
                    "@@ -{},{} +{},{} @@",
                    hunk.old_start,
                    hunk.old_len(),
                    hunk.new_start,
                    hunk.new_len()
                );
                for line in &hunk.lines {
                    out.push(line.kind.marker());
                    out.push_str(&line.text);
                    out.push('\n');
                }
            }
        }
        out
    }
}

struct HunkHeader {
    old_start: u32,
    old_len: usize,
    new_start: u32,
    new_len: usize,
}

fn parse_range(s: &str) -> Option<(u32, usize)> {
    match s.split_once(',') {
        Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_hunk_header(line: &str) -> Option<HunkHeader> {
    let rest = line.strip_prefix("@@ ")?;
    let end = rest.find(" @@")?;
    let mut parts = rest[..end].split_whitespace();
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    if parts.next().is_some() {
        return None;
    }
    let (old_start, old_len) = parse_range(old)?;
    let (new_start, new_len) = parse_range(new)?;
    Some(HunkHeader {
        old_start,
        old_len,
        new_start,
        new_len,
    })
}

/// Path from a `---`/`+++` line, with `a/`/`b/` prefixes and any trailing
/// timestamp removed. `None` for `/dev/null`.
fn header_path(rest: &str) -> Option<String> {
    let path = rest.split('\t').next().unwrap_or(rest).trim_end();
    if path == "/dev/null" {
        return None;
    }
    let path = path
        .strip_prefix("a/")
        .or_else(|| path.strip_prefix("b/"))
        .unwrap_or(path);
    Some(path.to_string())
}

/// Destination path from `diff --git a/<old> b/<new>`.
fn git_header_path(rest: &str) -> Option<String> {
    // Paths may contain spaces; the " b/" separator is the reliable split.
    let idx = rest.rfind(" b/")?;
    Some(rest[idx + 3..].to_string())
}

struct FileBuilder {
    path: Option<String>,
    hunks: Vec<Hunk>,
}

impl FileBuilder {
    fn finish(self, line_no: usize) -> Result<FileDiff, CorpusError> {
        let path = self.path.filter(|p| !p.is_empty()).ok_or_else(|| {
            CorpusError::malformed(line_no, "file diff without a resolvable path")
        })?;
        Ok(FileDiff {
            path,
            hunks: self.hunks,
        })
    }
}

/// Parse `git diff` output into a [`Changeset`].
pub fn parse_unified_diff(
    raw: &str,
    changeset_id: &str,
    log_message: &str,
) -> Result<Changeset, CorpusError> {
    let mut files = Vec::new();
    let mut current: Option<FileBuilder> = None;
    // (remaining old, remaining new) while inside a hunk body.
    let mut pending: Option<(usize, usize)> = None;
    let mut last_line = 0;

    for (idx, line) in raw.lines().enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = line.strip_suffix('\r').unwrap_or(line);

        if let Some((old_left, new_left)) = pending.as_mut() {
            if line.starts_with('\\') {
                continue;
            }
            let hunk = current
                .as_mut()
                .and_then(|f| f.hunks.last_mut())
                .expect("hunk body without open hunk");
            let (kind, text) = match line.chars().next() {
                Some('+') => (LineKind::Added, &line[1..]),
                Some('-') => (LineKind::Removed, &line[1..]),
                Some(' ') => (LineKind::Context, &line[1..]),
                // Some tools strip the single space of an empty context line.
                None => (LineKind::Context, ""),
                Some(c) => {
                    return Err(CorpusError::malformed(
                        line_no,
                        format!("illegal leading character {c:?} in hunk body"),
                    ))
                }
            };
            let consumes_old = kind != LineKind::Added;
            let consumes_new = kind != LineKind::Removed;
            if (consumes_old && *old_left == 0) || (consumes_new && *new_left == 0) {
                return Err(CorpusError::malformed(
                    line_no,
                    "hunk body longer than its header declares",
                ));
            }
            if consumes_old {
                *old_left -= 1;
            }
            if consumes_new {
                *new_left -= 1;
            }
            hunk.lines.push(DiffLine::new(kind, text));
            if *old_left == 0 && *new_left == 0 {
                if !hunk.has_changes() {
                    return Err(CorpusError::malformed(
                        line_no,
                        "hunk contains no added or removed lines",
                    ));
                }
                pending = None;
            }
            continue;
        }

        if let Some(rest) = line.strip_prefix("diff --git ") {
            if let Some(done) = current.take() {
                files.push(done.finish(line_no)?);
            }
            current = Some(FileBuilder {
                path: git_header_path(rest),
                hunks: Vec::new(),
            });
        } else if line.starts_with("@@") {
            let header = parse_hunk_header(line)
                .ok_or_else(|| CorpusError::malformed(line_no, "unparseable hunk header"))?;
            let file = current.as_mut().ok_or_else(|| {
                CorpusError::malformed(line_no, "hunk header before any file header")
            })?;
            if let Some(prev) = file.hunks.last() {
                if prev.old_start > header.old_start {
                    return Err(CorpusError::malformed(line_no, "hunks out of order"));
                }
            }
            file.hunks.push(Hunk {
                old_start: header.old_start,
                new_start: header.new_start,
                lines: Vec::new(),
            });
            if header.old_len == 0 && header.new_len == 0 {
                return Err(CorpusError::malformed(line_no, "empty hunk"));
            }
            pending = Some((header.old_len, header.new_len));
        } else if let Some(rest) = line.strip_prefix("--- ") {
            let starts_plain_file = match &current {
                None => true,
                Some(f) => !f.hunks.is_empty(),
            };
            if starts_plain_file {
                if let Some(done) = current.take() {
                    files.push(done.finish(line_no)?);
                }
                current = Some(FileBuilder {
                    path: header_path(rest),
                    hunks: Vec::new(),
                });
            } else if let Some(f) = current.as_mut() {
                if f.path.is_none() {
                    f.path = header_path(rest);
                }
            }
        } else if let Some(rest) = line.strip_prefix("+++ ") {
            let file = current.as_mut().ok_or_else(|| {
                CorpusError::malformed(line_no, "'+++' line before any file header")
            })?;
            // The destination path wins unless the file was deleted.
            if let Some(path) = header_path(rest) {
                file.path = Some(path);
            }
        } else if line.starts_with('\\') || line.is_empty() {
            continue;
        } else if current.as_ref().is_some_and(|f| f.hunks.is_empty()) {
            // Extended header lines: index, mode changes, renames, binary markers.
            if let Some(path) = line.strip_prefix("rename to ") {
                current.as_mut().unwrap().path = Some(path.to_string());
            }
        } else {
            return Err(CorpusError::malformed(
                line_no,
                format!("unexpected line outside hunk: {line:?}"),
            ));
        }
    }

    if pending.is_some() {
        return Err(CorpusError::malformed(last_line, "truncated hunk body"));
    }
    if let Some(done) = current.take() {
        files.push(done.finish(last_line)?);
    }
    Ok(Changeset {
        changeset_id: changeset_id.to_string(),
        log_message: log_message.to_string(),
        files,
        committed_at: None,
    })
}
