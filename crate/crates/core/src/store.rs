//! Session directories: a manifest plus the binary artifacts it vouches for.
//!
//! ```text
//! manifest.json   configuration, content hashes, sha256 of every file
//! index.fbli      IVFPQ index
//! projection.fble d_in × d_out projection
//! docs.fbld       per-document embedding matrices
//! vocab.txt       vocabulary, one token per line
//! corpus.json     parsed corpus
//! embedder.fble   token table (file embedders only)
//! ```

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::io::{Cursor, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::binio::{self, FormatError};
use crate::config::{Config, Limits};
use crate::corpus::{Corpus, Granularity};
use crate::embed::{
    DocMatrices, EmbedderSpec, EmbeddingMatrix, FileEmbedder, LinearProjection, MatrixKind,
};
use crate::encode::{Strategy, Vocabulary};
use crate::index::{IndexParams, IvfPqIndex};
use crate::pipeline::{LoadedEmbedder, Session};

pub const MANIFEST: &str = "manifest.json";
pub const INDEX_FILE: &str = "index.fbli";
pub const PROJECTION_FILE: &str = "projection.fble";
pub const DOCS_FILE: &str = "docs.fbld";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const CORPUS_FILE: &str = "corpus.json";
pub const EMBEDDER_FILE: &str = "embedder.fble";

pub const MANIFEST_VERSION: u32 = 1;
const FBLD_MAGIC: &[u8; 4] = b"FBLD";
const FBLD_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("{file}: {message}")]
    Invalid { file: String, message: String },
    #[error("{file}: checksum mismatch")]
    Checksum { file: String },
    #[error("session {field} is {found}, expected {expected}")]
    ConfigMismatch {
        field: &'static str,
        expected: String,
        found: String,
    },
}

fn io_err(path: &Path, source: std::io::Error) -> StoreError {
    StoreError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn invalid(file: &str, message: impl ToString) -> StoreError {
    StoreError::Invalid {
        file: file.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormatVersions {
    pub manifest: u32,
    pub fbli: u32,
    pub fble: u32,
    pub fbld: u32,
}

impl Default for FormatVersions {
    fn default() -> Self {
        Self {
            manifest: MANIFEST_VERSION,
            fbli: 1,
            fble: 1,
            fbld: FBLD_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub formats: FormatVersions,
    pub corpus_hash: String,
    pub granularity: Granularity,
    pub strategy: Strategy,
    pub limits: Limits,
    pub vocab_hash: String,
    pub embedder: EmbedderSpec,
    pub projection_hash: String,
    pub d_out: usize,
    pub index: IndexParams,
    /// Query-time defaults recorded at build time.
    pub candidates: usize,
    pub nprobe: usize,
    /// Storage precision of document matrices.
    pub precision: String,
    pub documents: usize,
    pub embeddings: usize,
    /// sha256 of each artifact file.
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    pub fn config(&self) -> Config {
        Config {
            granularity: self.granularity,
            strategy: self.strategy,
            limits: self.limits,
            partitions: self.index.partitions,
            candidates: self.candidates,
            nprobe: self.nprobe,
            subspaces: self.index.subspaces,
            codebook_size: self.index.codebook_size,
            seed: self.index.seed,
            d_in: self.embedder.d_in(),
            d_out: self.d_out,
        }
    }

    /// Fail on the first field that differs from an expectation.
    pub fn check(&self, expected: &Expectations) -> Result<(), StoreError> {
        fn cmp<T: PartialEq + Debug>(
            field: &'static str,
            want: &Option<T>,
            have: &T,
        ) -> Result<(), StoreError> {
            match want {
                Some(w) if w != have => Err(StoreError::ConfigMismatch {
                    field,
                    expected: format!("{w:?}"),
                    found: format!("{have:?}"),
                }),
                _ => Ok(()),
            }
        }
        cmp("corpus hash", &expected.corpus_hash, &self.corpus_hash)?;
        cmp("granularity", &expected.granularity, &self.granularity)?;
        cmp("strategy", &expected.strategy, &self.strategy)?;
        cmp("limits", &expected.limits, &self.limits)?;
        cmp("vocab hash", &expected.vocab_hash, &self.vocab_hash)?;
        cmp("embedder", &expected.embedder, &self.embedder)?;
        cmp(
            "projection hash",
            &expected.projection_hash,
            &self.projection_hash,
        )?;
        cmp("d_out", &expected.d_out, &self.d_out)?;
        cmp("partitions", &expected.partitions, &self.index.partitions)?;
        cmp("subspaces", &expected.subspaces, &self.index.subspaces)?;
        cmp(
            "codebook size",
            &expected.codebook_size,
            &self.index.codebook_size,
        )?;
        cmp("seed", &expected.seed, &self.index.seed)?;
        Ok(())
    }
}

/// Configuration a caller requires of a stored session; `None` accepts
/// whatever was saved.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expectations {
    pub corpus_hash: Option<String>,
    pub granularity: Option<Granularity>,
    pub strategy: Option<Strategy>,
    pub limits: Option<Limits>,
    pub vocab_hash: Option<String>,
    pub embedder: Option<EmbedderSpec>,
    pub projection_hash: Option<String>,
    pub d_out: Option<usize>,
    pub partitions: Option<usize>,
    pub subspaces: Option<usize>,
    pub codebook_size: Option<usize>,
    pub seed: Option<u64>,
}

/// `FBLD`: magic, u32 version, u32 dim, u64 document count, then per document
/// (u32-length id, u64 first row, u64 row count), then u64 total rows and the
/// row data as f32, documents stored back to back.
pub fn doc_pack_bytes(docs: &DocMatrices) -> Vec<u8> {
    let dim = docs.dim().unwrap_or(0);
    let mut out = Vec::new();
    let w = &mut out;
    w.extend_from_slice(FBLD_MAGIC);
    binio::write_u32(w, FBLD_VERSION).unwrap();
    binio::write_u32(w, dim as u32).unwrap();
    binio::write_u64(w, docs.len() as u64).unwrap();
    let mut offset = 0u64;
    for (id, m) in docs.iter() {
        binio::write_string(w, id).unwrap();
        binio::write_u64(w, offset).unwrap();
        binio::write_u64(w, m.n_rows() as u64).unwrap();
        offset += m.n_rows() as u64;
    }
    binio::write_u64(w, offset).unwrap();
    for (_, m) in docs.iter() {
        binio::write_f32s(w, m.as_slice()).unwrap();
    }
    out
}

pub fn read_doc_pack(bytes: &[u8], file: &str) -> Result<DocMatrices, FormatError> {
    let total = bytes.len() as u64;
    let mut r = Cursor::new(bytes);
    binio::expect_magic(&mut r, FBLD_MAGIC, file)?;
    binio::expect_version(&mut r, FBLD_VERSION, file)?;
    let dim = binio::read_u32(&mut r, file)? as usize;
    let n = binio::read_u64(&mut r, file)?;
    let n = binio::checked_len(n, 20, Some(total - r.position()), file)?;
    let mut table = Vec::with_capacity(n);
    let mut expected_offset = 0u64;
    for _ in 0..n {
        let id = binio::read_string(&mut r, file)?;
        let offset = binio::read_u64(&mut r, file)?;
        let rows = binio::read_u64(&mut r, file)?;
        if offset != expected_offset {
            return Err(FormatError::corrupt(
                file,
                "document offsets are not contiguous",
            ));
        }
        expected_offset = offset
            .checked_add(rows)
            .ok_or_else(|| FormatError::corrupt(file, "row count overflow"))?;
        table.push((id, rows));
    }
    let total_rows = binio::read_u64(&mut r, file)?;
    if total_rows != expected_offset {
        return Err(FormatError::corrupt(
            file,
            "row total disagrees with offset table",
        ));
    }
    if n > 0 && dim == 0 {
        return Err(FormatError::corrupt(file, "zero dimension"));
    }
    let len = binio::checked_len(
        total_rows.saturating_mul(dim as u64),
        4,
        Some(total - r.position()),
        file,
    )?;
    let data = binio::read_f32s(&mut r, len, file)?;
    if r.position() != total {
        return Err(FormatError::corrupt(
            file,
            "trailing bytes after document pack",
        ));
    }
    let mut entries = Vec::with_capacity(n);
    let mut start = 0usize;
    for (id, rows) in table {
        let end = start + rows as usize * dim;
        entries.push((
            id,
            EmbeddingMatrix::new(dim, data[start..end].to_vec(), MatrixKind::Document),
        ));
        start = end;
    }
    let docs = DocMatrices::new(entries);
    if docs.len() != n {
        return Err(FormatError::corrupt(file, "duplicate document ids"));
    }
    Ok(docs)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Write `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let target = dir.join(name);
    let mut f = std::fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, &target).map_err(|e| io_err(&target, e))
}

/// Serialized artifacts of a session, keyed by file name.
pub fn artifacts(session: &Session) -> BTreeMap<&'static str, Vec<u8>> {
    let mut files = BTreeMap::new();
    files.insert(INDEX_FILE, session.index.to_bytes());
    files.insert(PROJECTION_FILE, session.projection.to_bytes());
    files.insert(DOCS_FILE, doc_pack_bytes(&session.docs));
    files.insert(VOCAB_FILE, session.vocab.to_text().into_bytes());
    files.insert(
        CORPUS_FILE,
        serde_json::to_vec(&session.corpus).expect("corpus serializes"),
    );
    if let Some(table) = &session.embedder.table {
        files.insert(EMBEDDER_FILE, table.as_ref().clone());
    }
    files
}

pub fn manifest_for(session: &Session, files: &BTreeMap<&'static str, Vec<u8>>) -> Manifest {
    let c = &session.config;
    Manifest {
        formats: FormatVersions::default(),
        corpus_hash: session.corpus.content_hash(),
        granularity: c.granularity,
        strategy: c.strategy,
        limits: c.limits,
        vocab_hash: session.vocab.content_hash(),
        embedder: session.embedder.spec(),
        projection_hash: session.projection.content_hash(),
        d_out: c.d_out,
        index: c.index_params(),
        candidates: c.candidates,
        nprobe: c.nprobe,
        precision: "f32".into(),
        documents: session.docs.len(),
        embeddings: session.index.len(),
        checksums: files
            .iter()
            .map(|(k, v)| (k.to_string(), sha256_hex(v)))
            .collect(),
    }
}

/// Persist a session. The manifest is written last, so a directory with a
/// manifest always has complete artifacts.
pub fn save_session(dir: &Path, session: &Session) -> Result<Manifest, StoreError> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let files = artifacts(session);
    let manifest = manifest_for(session, &files);
    for (name, bytes) in &files {
        write_atomic(dir, name, bytes)?;
    }
    let stale = dir.join(EMBEDDER_FILE);
    if !files.contains_key(EMBEDDER_FILE) && stale.exists() {
        std::fs::remove_file(&stale).map_err(|e| io_err(&stale, e))?;
    }
    let mut json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    json.push(b'\n');
    write_atomic(dir, MANIFEST, &json)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<Manifest, StoreError> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| invalid(MANIFEST, e))?;
    if m.formats != FormatVersions::default() {
        return Err(invalid(
            MANIFEST,
            format!("unsupported format versions {:?}", m.formats),
        ));
    }
    Ok(m)
}

struct Reader {
    dir: PathBuf,
    manifest: Manifest,
}

impl Reader {
    fn read(&self, name: &str) -> Result<Vec<u8>, StoreError> {
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
        let want = self
            .manifest
            .checksums
            .get(name)
            .ok_or_else(|| invalid(MANIFEST, format!("no checksum for {name}")))?;
        if &sha256_hex(&bytes) != want {
            // a bad header is the more useful diagnosis when there is one
            self.sniff(name, &bytes)?;
            return Err(StoreError::Checksum {
                file: name.to_string(),
            });
        }
        Ok(bytes)
    }

    fn sniff(&self, name: &str, bytes: &[u8]) -> Result<(), StoreError> {
        let magic: Option<&[u8; 4]> = match name {
            INDEX_FILE => Some(b"FBLI"),
            PROJECTION_FILE | EMBEDDER_FILE => Some(b"FBLE"),
            DOCS_FILE => Some(FBLD_MAGIC),
            _ => None,
        };
        if let Some(m) = magic {
            binio::expect_magic(&mut Cursor::new(bytes), m, name)?;
        }
        Ok(())
    }
}

/// Load and verify a session, then check it against `expected`.
pub fn load_session(dir: &Path, expected: &Expectations) -> Result<Session, StoreError> {
    let manifest = read_manifest(dir)?;
    manifest.check(expected)?;
    let reader = Reader {
        dir: dir.to_path_buf(),
        manifest,
    };
    let m = &reader.manifest;
    if m.precision != "f32" {
        return Err(invalid(
            MANIFEST,
            format!("unsupported precision {:?}", m.precision),
        ));
    }

    let index = IvfPqIndex::from_bytes(&reader.read(INDEX_FILE)?, INDEX_FILE)?;
    let projection = LinearProjection::from_bytes(&reader.read(PROJECTION_FILE)?, PROJECTION_FILE)
        .map_err(|e| invalid(PROJECTION_FILE, e))?;
    let docs = read_doc_pack(&reader.read(DOCS_FILE)?, DOCS_FILE)?;
    let vocab_text =
        String::from_utf8(reader.read(VOCAB_FILE)?).map_err(|e| invalid(VOCAB_FILE, e))?;
    let vocab = Vocabulary::parse(&vocab_text).map_err(|e| invalid(VOCAB_FILE, e))?;
    let corpus: Corpus =
        serde_json::from_slice(&reader.read(CORPUS_FILE)?).map_err(|e| invalid(CORPUS_FILE, e))?;
    let embedder = match &m.embedder {
        EmbedderSpec::Hash { seed, d_in } => LoadedEmbedder::hash(*seed, *d_in),
        EmbedderSpec::File { .. } => {
            let bytes = reader.read(EMBEDDER_FILE)?;
            LoadedEmbedder::file(
                FileEmbedder::from_bytes(&bytes, EMBEDDER_FILE)
                    .map_err(|e| invalid(EMBEDDER_FILE, e))?,
            )
        }
    };

    let consistency = [
        ("vocab hash", vocab.content_hash(), m.vocab_hash.clone()),
        (
            "projection hash",
            projection.content_hash(),
            m.projection_hash.clone(),
        ),
        ("corpus hash", corpus.content_hash(), m.corpus_hash.clone()),
    ];
    for (field, found, expected) in consistency {
        if found != expected {
            return Err(StoreError::ConfigMismatch {
                field,
                expected,
                found,
            });
        }
    }
    if embedder.spec() != m.embedder {
        return Err(StoreError::ConfigMismatch {
            field: "embedder",
            expected: format!("{:?}", m.embedder),
            found: format!("{:?}", embedder.spec()),
        });
    }
    let config = m.config();
    config.validate().map_err(|e| invalid(MANIFEST, e))?;
    if projection.d_in() != config.d_in || projection.d_out() != config.d_out {
        return Err(invalid(
            PROJECTION_FILE,
            "projection shape differs from manifest",
        ));
    }
    if index.dim() != config.d_out
        || index.partitions() != config.partitions
        || index.doc_ids() != docs.ids()
    {
        return Err(invalid(
            INDEX_FILE,
            "index does not match manifest and document pack",
        ));
    }
    Ok(Session {
        config,
        corpus,
        vocab,
        embedder,
        projection,
        docs,
        index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::random_docs;

    #[test]
    fn doc_pack_round_trip() {
        let docs = random_docs(7, 0, 5, 4, 1);
        let bytes = doc_pack_bytes(&docs);
        let back = read_doc_pack(&bytes, DOCS_FILE).unwrap();
        assert_eq!(back, docs);
        assert_eq!(doc_pack_bytes(&back), bytes);
    }

    #[test]
    fn doc_pack_rejects_damage() {
        let bytes = doc_pack_bytes(&random_docs(3, 1, 2, 4, 1));
        let mut bad = bytes.clone();
        bad[1] = b'?';
        assert!(matches!(
            read_doc_pack(&bad, DOCS_FILE),
            Err(FormatError::BadMagic { .. })
        ));
        assert!(read_doc_pack(&bytes[..bytes.len() - 2], DOCS_FILE).is_err());
        let mut long = bytes;
        long.extend_from_slice(&[0; 4]);
        assert!(read_doc_pack(&long, DOCS_FILE).is_err());
    }

    #[test]
    fn empty_pack() {
        let bytes = doc_pack_bytes(&DocMatrices::default());
        assert!(read_doc_pack(&bytes, DOCS_FILE).unwrap().is_empty());
    }
}
