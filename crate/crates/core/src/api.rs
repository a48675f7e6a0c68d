//! Request and response bodies of the HTTP query service.

use serde::{Deserialize, Serialize};

use std::collections::BTreeSet;

use crate::eval::MetricsReport;
use crate::pipeline::{self, QueryOptions, Session};
use crate::retrieve::{Aggregation, RankMode, RankedResult, RunRecord};
use crate::{Error, ErrorKind};

/// Candidate budget: a count or `"all"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Candidates {
    Count(usize),
    Keyword(AllKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllKeyword {
    All,
}

impl Candidates {
    pub const ALL: Candidates = Candidates::Keyword(AllKeyword::All);

    pub fn budget(self) -> usize {
        match self {
            Candidates::Count(n) => n,
            Candidates::Keyword(AllKeyword::All) => usize::MAX,
        }
    }
}

impl std::str::FromStr for Candidates {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "all" {
            return Ok(Candidates::ALL);
        }
        match s.parse::<usize>() {
            Ok(0) => Err("candidate count must be positive".into()),
            Ok(n) => Ok(Candidates::Count(n)),
            Err(_) => Err(format!(
                "invalid candidate count {s:?} (expected a number or all)"
            )),
        }
    }
}

/// Per-request overrides of the session's query defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryParams {
    pub topk: Option<usize>,
    pub nprobe: Option<usize>,
    pub candidates: Option<Candidates>,
    pub exact: bool,
    pub aggregate: Option<Aggregation>,
}

impl QueryParams {
    pub fn resolve(&self, defaults: &QueryOptions) -> QueryOptions {
        QueryOptions {
            topk: self.topk.unwrap_or(defaults.topk),
            nprobe: self.nprobe.unwrap_or(defaults.nprobe),
            candidates: self
                .candidates
                .map_or(defaults.candidates, Candidates::budget),
            exact: self.exact,
            aggregate: self.aggregate.or(defaults.aggregate),
        }
    }
}

/// Either a stored bug or free text; `bug_id` alone looks the bug up.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(flatten)]
    pub params: QueryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub bug_id: String,
    pub mode: RankMode,
    pub results: Vec<RunRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchQueryRequest {
    /// Every bug in the corpus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_ids: Option<Vec<String>>,
    #[serde(flatten)]
    pub params: QueryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchQueryResponse {
    pub results: Vec<QueryResponse>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    /// Bugs with gold links in the corpus when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bug_ids: Option<Vec<String>>,
    #[serde(flatten)]
    pub params: QueryParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeRequest {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizeResponse {
    pub tokens: Vec<String>,
    pub ids: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub documents: usize,
    pub embeddings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub kind: ErrorKind,
}

/// Bug id used for free-text queries that do not name one.
pub const ADHOC_BUG_ID: &str = "query";

fn options(
    session: &Session,
    params: &QueryParams,
    topk: Option<usize>,
) -> Result<QueryOptions, Error> {
    let mut defaults = QueryOptions::from_config(&session.config);
    if let Some(k) = topk {
        defaults.topk = k;
    }
    let opts = params.resolve(&defaults);
    if opts.candidates == 0 {
        return Err(Error::Request("candidate count must be positive".into()));
    }
    if opts.topk == 0 {
        return Err(Error::Request("topk must be positive".into()));
    }
    Ok(opts)
}

fn response(result: RankedResult) -> QueryResponse {
    QueryResponse {
        bug_id: result.bug_id.clone(),
        mode: result.mode,
        results: RunRecord::from_result(&result),
    }
}

pub fn query(session: &Session, req: &QueryRequest) -> Result<QueryResponse, Error> {
    let opts = options(session, &req.params, None)?;
    let result = match (&req.text, &req.bug_id) {
        (Some(text), id) => {
            session.rank_text(id.as_deref().unwrap_or(ADHOC_BUG_ID), text, &opts)?
        }
        (None, Some(id)) => session.rank_bug(session.bug(id)?, &opts)?,
        (None, None) => return Err(Error::Request("a query needs bug_id or text".into())),
    };
    Ok(response(result))
}

pub fn query_batch(
    session: &Session,
    req: &BatchQueryRequest,
) -> Result<BatchQueryResponse, Error> {
    let opts = options(session, &req.params, None)?;
    let bugs = match &req.bug_ids {
        Some(ids) => ids
            .iter()
            .map(|id| session.bug(id))
            .collect::<Result<Vec<_>, _>>()?,
        None => session.corpus.bugs.iter().collect(),
    };
    let results = bugs
        .into_iter()
        .map(|b| session.rank_bug(b, &opts).map(response))
        .collect::<Result<_, _>>()?;
    Ok(BatchQueryResponse { results })
}

/// Rank the requested bugs (all linked bugs by default) over the full
/// document list and score them against the corpus links.
pub fn evaluate(session: &Session, req: &EvaluateRequest) -> Result<EvaluateResponse, Error> {
    let mut opts = options(session, &req.params, Some(usize::MAX))?;
    // metrics are changeset-level; evaluation aggregates itself
    opts.aggregate = None;
    let qrels = session.corpus.qrels();
    let bugs: BTreeSet<String> = match &req.bug_ids {
        Some(ids) => {
            for id in ids {
                session.bug(id)?;
            }
            ids.iter()
                .filter(|id| qrels.contains_key(*id))
                .cloned()
                .collect()
        }
        None => qrels.keys().cloned().collect(),
    };
    if bugs.is_empty() {
        return Err(Error::Request("no requested bug has gold links".into()));
    }
    let results = bugs
        .iter()
        .map(|id| session.rank_bug(session.bug(id)?, &opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvaluateResponse {
        report: pipeline::evaluate(&results, &session.corpus, Some(&bugs))?,
    })
}

pub fn tokenize(session: &Session, req: &TokenizeRequest) -> TokenizeResponse {
    let ids = session.vocab.tokenize(&req.text);
    TokenizeResponse {
        tokens: ids
            .iter()
            .map(|&i| session.vocab.token(i).unwrap_or_default().to_string())
            .collect(),
        ids,
    }
}

pub fn health(session: &Session) -> Health {
    Health {
        status: "ok".into(),
        documents: session.docs.len(),
        embeddings: session.index.len(),
    }
}

impl ErrorBody {
    pub fn from_error(e: &Error) -> Self {
        Self {
            error: e.to_string(),
            kind: e.kind(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidates_wire_forms() {
        assert_eq!(serde_json::to_string(&Candidates::ALL).unwrap(), r#""all""#);
        assert_eq!(
            serde_json::from_str::<Candidates>("250").unwrap(),
            Candidates::Count(250)
        );
        assert_eq!(
            serde_json::from_str::<Candidates>(r#""all""#)
                .unwrap()
                .budget(),
            usize::MAX
        );
        assert!("0".parse::<Candidates>().is_err());
        assert!("lots".parse::<Candidates>().is_err());
    }

    #[test]
    fn query_request_flattens_params() {
        let r: QueryRequest =
            serde_json::from_str(r#"{"text":"npe","topk":3,"candidates":"all","exact":true}"#)
                .unwrap();
        assert_eq!(r.text.as_deref(), Some("npe"));
        assert_eq!(r.params.topk, Some(3));
        assert!(r.params.exact);
        let defaults = QueryOptions {
            topk: 10,
            nprobe: 16,
            candidates: 1000,
            exact: false,
            aggregate: None,
        };
        let o = r.params.resolve(&defaults);
        assert_eq!(
            (o.topk, o.nprobe, o.candidates, o.exact),
            (3, 16, usize::MAX, true)
        );
    }
}
