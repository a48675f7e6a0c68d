//! Glue from a parsed corpus to a queryable session.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::config::Config;
use crate::corpus::{build_triplets, BugReport, Corpus, Document, GoldLink};
use crate::embed::{
    raw_rows, DocMatrices, EmbedError, EmbedderSpec, EmbeddingMatrix, FileEmbedder, HashEmbedder,
    LinearProjection, MatrixKind, TokenEmbedder, TripletExample,
};
use crate::encode::{encode_document, encode_query_text, EncodedSequence, Vocabulary};
use crate::eval::{self, BugCategory, MetricsReport};
use crate::index::IvfPqIndex;
use crate::retrieve::{
    aggregate_to_changeset, rank_exact, rank_two_stage, Aggregation, RankedResult,
};
use crate::Error;

/// Where token vectors come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedderSource {
    Hash,
    File(std::path::PathBuf),
}

impl std::str::FromStr for EmbedderSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "hash" {
            Ok(EmbedderSource::Hash)
        } else if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return Err("file embedder needs a path".into());
            }
            Ok(EmbedderSource::File(p.into()))
        } else {
            Err(format!(
                "unknown embedder {s:?} (expected hash or file:<path>)"
            ))
        }
    }
}

/// A token embedder together with the bytes needed to persist it.
#[derive(Clone)]
pub struct LoadedEmbedder {
    pub embedder: Arc<dyn TokenEmbedder>,
    /// Canonical FBLE table for file embedders.
    pub table: Option<Arc<Vec<u8>>>,
}

impl std::fmt::Debug for LoadedEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LoadedEmbedder")
            .field("spec", &self.embedder.spec())
            .finish()
    }
}

impl LoadedEmbedder {
    pub fn hash(seed: u64, d_in: usize) -> Self {
        Self {
            embedder: Arc::new(HashEmbedder::new(seed, d_in)),
            table: None,
        }
    }

    pub fn file(e: FileEmbedder) -> Self {
        let table = Arc::new(e.to_bytes());
        Self {
            embedder: Arc::new(e),
            table: Some(table),
        }
    }

    pub fn from_source(source: &EmbedderSource, cfg: &Config) -> Result<Self, Error> {
        match source {
            EmbedderSource::Hash => Ok(Self::hash(cfg.seed, cfg.d_in)),
            EmbedderSource::File(p) => Ok(Self::file(FileEmbedder::load(p)?)),
        }
    }

    pub fn spec(&self) -> EmbedderSpec {
        self.embedder.spec()
    }
}

/// Embeds sequences, projecting each distinct token only once.
///
/// Token vectors do not depend on context, so the projected row of a token
/// id is reused; results are identical to [`crate::embed::embed_sequence`].
pub struct SequenceEmbedder<'a> {
    embedder: &'a dyn TokenEmbedder,
    projection: &'a LinearProjection,
    cache: RwLock<HashMap<u32, Arc<[f32]>>>,
}

impl<'a> SequenceEmbedder<'a> {
    pub fn new(
        embedder: &'a dyn TokenEmbedder,
        projection: &'a LinearProjection,
    ) -> Result<Self, EmbedError> {
        if embedder.dim() != projection.d_in() {
            return Err(EmbedError::DimensionMismatch {
                embedder: embedder.dim(),
                projection: projection.d_in(),
            });
        }
        Ok(Self {
            embedder,
            projection,
            cache: RwLock::new(HashMap::new()),
        })
    }

    fn row(&self, token: u32) -> Result<Arc<[f32]>, EmbedError> {
        if let Some(r) = self.cache.read().unwrap().get(&token) {
            return Ok(r.clone());
        }
        let mut raw = vec![0f32; self.embedder.dim()];
        self.embedder.embed_into(token, &mut raw)?;
        let mut projected = vec![0f64; self.projection.d_out()];
        self.projection.apply(&raw, &mut projected);
        let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
        let row: Arc<[f32]> = if norm > 0.0 {
            projected.iter().map(|v| (v / norm) as f32).collect()
        } else {
            vec![0f32; projected.len()].into()
        };
        Ok(self
            .cache
            .write()
            .unwrap()
            .entry(token)
            .or_insert(row)
            .clone())
    }

    pub fn embed(
        &self,
        seq: &EncodedSequence,
        kind: MatrixKind,
    ) -> Result<EmbeddingMatrix, EmbedError> {
        let d_out = self.projection.d_out();
        let mut data = Vec::with_capacity(seq.real_length * d_out);
        for &t in seq.real_ids() {
            data.extend_from_slice(&self.row(t)?);
        }
        Ok(EmbeddingMatrix::new(d_out, data, kind))
    }
}

pub fn encode_documents(
    docs: &[Document],
    vocab: &Vocabulary,
    cfg: &Config,
) -> Result<Vec<EncodedSequence>, Error> {
    let limit = cfg.document_limit();
    docs.iter()
        .map(|d| encode_document(d, cfg.strategy, vocab, limit).map_err(Error::from))
        .collect()
}

pub fn embed_documents(
    corpus: &Corpus,
    vocab: &Vocabulary,
    embedder: &dyn TokenEmbedder,
    projection: &LinearProjection,
    cfg: &Config,
) -> Result<DocMatrices, Error> {
    let docs = corpus.documents(cfg.granularity);
    let encoded = encode_documents(&docs, vocab, cfg)?;
    let se = SequenceEmbedder::new(embedder, projection)?;
    let mut out = Vec::with_capacity(docs.len());
    for (d, seq) in docs.iter().zip(&encoded) {
        out.push((d.doc_id.clone(), se.embed(seq, MatrixKind::Document)?));
    }
    Ok(DocMatrices::new(out))
}

/// Raw (unprojected) training triplets for the given gold links.
pub fn triplet_examples(
    corpus: &Corpus,
    links: &[GoldLink],
    vocab: &Vocabulary,
    embedder: &dyn TokenEmbedder,
    cfg: &Config,
) -> Result<Vec<TripletExample>, Error> {
    let docs = corpus.documents(cfg.granularity);
    let triplets = build_triplets(links, &docs, cfg.seed)?;
    let by_id: HashMap<&str, &Document> = docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let limit = cfg.document_limit();
    let mut doc_rows = HashMap::new();
    let mut rows_of = |id: &str| -> Result<crate::embed::DenseMatrix, Error> {
        if let Some(r) = doc_rows.get(id) {
            return Ok(Clone::clone(r));
        }
        let seq = encode_document(by_id[id], cfg.strategy, vocab, limit)?;
        let r = raw_rows(&seq, embedder)?;
        doc_rows.insert(id.to_string(), r.clone());
        Ok(r)
    };
    let mut out = Vec::with_capacity(triplets.len());
    for t in &triplets {
        let bug = corpus
            .bug(&t.bug_id)
            .ok_or_else(|| Error::UnknownBug(t.bug_id.clone()))?;
        let q = encode_query_text(&bug.query_text(), vocab, cfg.limits.query)?;
        out.push(TripletExample {
            query: raw_rows(&q, embedder)?,
            positive: rows_of(&t.positive_doc)?,
            negative: rows_of(&t.negative_doc)?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryOptions {
    pub topk: usize,
    pub nprobe: usize,
    /// Candidate embedding budget; `usize::MAX` means everything.
    pub candidates: usize,
    pub exact: bool,
    /// Collapse document results onto changesets.
    pub aggregate: Option<Aggregation>,
}

impl QueryOptions {
    pub fn from_config(cfg: &Config) -> Self {
        Self {
            topk: 10,
            nprobe: cfg.nprobe,
            candidates: cfg.candidates,
            exact: false,
            aggregate: None,
        }
    }
}

/// Everything needed to answer queries.
#[derive(Debug)]
pub struct Session {
    pub config: Config,
    pub corpus: Corpus,
    pub vocab: Vocabulary,
    pub embedder: LoadedEmbedder,
    pub projection: LinearProjection,
    pub docs: DocMatrices,
    pub index: IvfPqIndex,
}

impl Session {
    pub fn build(
        corpus: Corpus,
        vocab: Vocabulary,
        embedder: LoadedEmbedder,
        projection: LinearProjection,
        config: Config,
    ) -> Result<Self, Error> {
        config.validate().map_err(Error::Config)?;
        if projection.d_out() != config.d_out {
            return Err(Error::Config(format!(
                "projection output {} differs from d_out {}",
                projection.d_out(),
                config.d_out
            )));
        }
        let docs = embed_documents(
            &corpus,
            &vocab,
            embedder.embedder.as_ref(),
            &projection,
            &config,
        )?;
        let index = IvfPqIndex::build(&docs, &config.index_params())?;
        Ok(Self {
            config,
            corpus,
            vocab,
            embedder,
            projection,
            docs,
            index,
        })
    }

    pub fn embed_query(&self, text: &str) -> Result<EmbeddingMatrix, Error> {
        let seq = encode_query_text(text, &self.vocab, self.config.limits.query)?;
        let se = SequenceEmbedder::new(self.embedder.embedder.as_ref(), &self.projection)?;
        Ok(se.embed(&seq, MatrixKind::Query)?)
    }

    pub fn rank_text(
        &self,
        bug_id: &str,
        text: &str,
        opts: &QueryOptions,
    ) -> Result<RankedResult, Error> {
        let q = self.embed_query(text)?;
        let mut result = if opts.exact {
            let mut r = rank_exact(bug_id, &q, &self.docs)?;
            if opts.aggregate.is_none() {
                r.truncate(opts.topk);
            }
            r
        } else {
            // aggregation needs more than topk documents to fill topk changesets
            let k = if opts.aggregate.is_some() {
                usize::MAX
            } else {
                opts.topk
            };
            rank_two_stage(
                bug_id,
                &q,
                &self.index,
                &self.docs,
                opts.candidates,
                opts.nprobe,
                k,
            )?
        };
        if let Some(how) = opts.aggregate {
            result = aggregate_to_changeset(&result, how);
            result.truncate(opts.topk);
        }
        Ok(result)
    }

    pub fn rank_bug(&self, bug: &BugReport, opts: &QueryOptions) -> Result<RankedResult, Error> {
        self.rank_text(&bug.bug_id, &bug.query_text(), opts)
    }

    pub fn bug(&self, bug_id: &str) -> Result<&BugReport, Error> {
        self.corpus
            .bug(bug_id)
            .ok_or_else(|| Error::UnknownBug(bug_id.to_string()))
    }
}

/// Localization category of every bug that has gold links.
pub fn categorize_bugs(corpus: &Corpus) -> Result<BTreeMap<String, BugCategory>, Error> {
    let mut out = BTreeMap::new();
    for bug_id in corpus.qrels().keys() {
        let bug = corpus
            .bug(bug_id)
            .ok_or_else(|| Error::UnknownBug(bug_id.clone()))?;
        let names = corpus.gold_class_names(bug_id);
        if names.is_empty() {
            continue;
        }
        out.insert(bug_id.clone(), eval::categorize(bug, &names)?);
    }
    Ok(out)
}

/// Changeset-level metrics for `results` (document-level runs are
/// max-aggregated first), restricted to `bugs` when given.
pub fn evaluate(
    results: &[RankedResult],
    corpus: &Corpus,
    bugs: Option<&BTreeSet<String>>,
) -> Result<MetricsReport, Error> {
    let mut qrels = corpus.qrels();
    if let Some(keep) = bugs {
        qrels.retain(|b, _| keep.contains(b));
    }
    let aggregated: Vec<RankedResult> = results
        .iter()
        .map(|r| aggregate_to_changeset(r, Aggregation::Max))
        .collect();
    let mut cats = categorize_bugs(corpus)?;
    cats.retain(|b, _| qrels.contains_key(b));
    Ok(eval::report(&aggregated, &qrels, &cats)?)
}

pub fn load_vocab_or_build(path: Option<&Path>, corpus: &Corpus) -> Result<Vocabulary, Error> {
    match path {
        Some(p) => Ok(Vocabulary::load(p)?),
        None => Ok(build_vocab(corpus, 1)),
    }
}

/// Word-level vocabulary over bug texts and diff lines.
pub fn build_vocab(corpus: &Corpus, min_count: usize) -> Vocabulary {
    let bug_texts: Vec<String> = corpus.bugs.iter().map(BugReport::query_text).collect();
    let texts = bug_texts.iter().map(String::as_str).chain(
        corpus
            .changesets
            .iter()
            .flat_map(|c| c.lines().map(|l| l.text.as_str())),
    );
    Vocabulary::from_texts(texts, min_count)
}
