//! Ranking metrics and localization-hint categories.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::BugReport;
use crate::retrieve::RankedResult;

pub type Qrels = BTreeMap<String, BTreeSet<String>>;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("bug {0} has no gold class names")]
    EmptyGoldSet(String),
    #[error("qrels are empty")]
    NoQueries,
    #[error("invalid cutoff {0}")]
    InvalidCutoff(usize),
}

/// `1 / rank` of the first relevant entry, 0 on a miss.
pub fn reciprocal_rank<'a>(
    ranking: impl IntoIterator<Item = &'a str>,
    relevant: &BTreeSet<String>,
) -> f64 {
    ranking
        .into_iter()
        .position(|d| relevant.contains(d))
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Precision at each relevant rank, averaged over all relevant items; items
/// never retrieved contribute 0.
pub fn average_precision<'a>(
    ranking: impl IntoIterator<Item = &'a str>,
    relevant: &BTreeSet<String>,
) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let mut seen = HashSet::new();
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, d) in ranking.into_iter().enumerate() {
        if relevant.contains(d) && seen.insert(d) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / relevant.len() as f64
}

/// Relevant entries among the first `k`, over `k`.
pub fn precision_at_k<'a>(
    ranking: impl IntoIterator<Item = &'a str>,
    relevant: &BTreeSet<String>,
    k: usize,
) -> f64 {
    assert!(k >= 1, "cutoff must be positive");
    let hits = ranking
        .into_iter()
        .take(k)
        .filter(|d| relevant.contains(*d))
        .count();
    hits as f64 / k as f64
}

fn mean_over(
    results: &[RankedResult],
    qrels: &Qrels,
    f: impl Fn(&RankedResult, &BTreeSet<String>) -> f64,
) -> Result<f64, EvalError> {
    if qrels.is_empty() {
        return Err(EvalError::NoQueries);
    }
    let by_bug: BTreeMap<&str, &RankedResult> =
        results.iter().map(|r| (r.bug_id.as_str(), r)).collect();
    let total: f64 = qrels
        .iter()
        .map(|(bug, rel)| by_bug.get(bug.as_str()).map_or(0.0, |r| f(r, rel)))
        .sum();
    Ok(total / qrels.len() as f64)
}

/// Mean reciprocal rank over every bug in `qrels`; bugs without a result
/// count as misses.
pub fn mrr(results: &[RankedResult], qrels: &Qrels) -> Result<f64, EvalError> {
    mean_over(results, qrels, |r, rel| reciprocal_rank(r.doc_ids(), rel))
}

pub fn map(results: &[RankedResult], qrels: &Qrels) -> Result<f64, EvalError> {
    mean_over(results, qrels, |r, rel| average_precision(r.doc_ids(), rel))
}

pub fn mean_precision_at_k(
    results: &[RankedResult],
    qrels: &Qrels,
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::InvalidCutoff(k));
    }
    mean_over(results, qrels, |r, rel| precision_at_k(r.doc_ids(), rel, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BugCategory {
    NotLocalized,
    PartiallyLocalized,
    FullyLocalized,
}

impl BugCategory {
    pub fn short(self) -> &'static str {
        match self {
            BugCategory::NotLocalized => "NL",
            BugCategory::PartiallyLocalized => "PL",
            BugCategory::FullyLocalized => "FL",
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '$'
}

/// How many of the gold classes the report names.
///
/// A name counts when it appears as a whole identifier; dots delimit, so
/// `Foo.java` and `pkg.Foo` both mention `Foo`.
pub fn categorize(
    report: &BugReport,
    gold_class_names: &BTreeSet<String>,
) -> Result<BugCategory, EvalError> {
    if gold_class_names.is_empty() {
        return Err(EvalError::EmptyGoldSet(report.bug_id.clone()));
    }
    let text = report.query_text();
    let words: HashSet<&str> = text
        .split(|c: char| !is_ident_char(c))
        .filter(|w| !w.is_empty())
        .collect();
    let found = gold_class_names
        .iter()
        .filter(|n| words.contains(n.as_str()))
        .count();
    Ok(if found == 0 {
        BugCategory::NotLocalized
    } else if found == gold_class_names.len() {
        BugCategory::FullyLocalized
    } else {
        BugCategory::PartiallyLocalized
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub queries: usize,
    pub mrr: f64,
    pub map: f64,
    #[serde(rename = "p@1")]
    pub p1: f64,
    #[serde(rename = "p@3")]
    pub p3: f64,
    #[serde(rename = "p@5")]
    pub p5: f64,
}

impl MetricSet {
    pub fn compute(results: &[RankedResult], qrels: &Qrels) -> Result<Self, EvalError> {
        Ok(Self {
            queries: qrels.len(),
            mrr: mrr(results, qrels)?,
            map: map(results, qrels)?,
            p1: mean_precision_at_k(results, qrels, 1)?,
            p3: mean_precision_at_k(results, qrels, 3)?,
            p5: mean_precision_at_k(results, qrels, 5)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall: MetricSet,
    /// Keyed by `NL`, `PL`, `FL` and `NL+PL`; groups without bugs are absent.
    pub by_category: BTreeMap<String, MetricSet>,
    pub categories: BTreeMap<String, BugCategory>,
}

/// Overall metrics plus per-category breakdowns. `categories` may omit bugs,
/// which then only count towards the overall figures.
pub fn report(
    results: &[RankedResult],
    qrels: &Qrels,
    categories: &BTreeMap<String, BugCategory>,
) -> Result<MetricsReport, EvalError> {
    let overall = MetricSet::compute(results, qrels)?;
    let mut by_category = BTreeMap::new();
    let groups: [(&str, &[BugCategory]); 4] = [
        ("NL", &[BugCategory::NotLocalized]),
        ("PL", &[BugCategory::PartiallyLocalized]),
        ("FL", &[BugCategory::FullyLocalized]),
        (
            "NL+PL",
            &[BugCategory::NotLocalized, BugCategory::PartiallyLocalized],
        ),
    ];
    for (name, members) in groups {
        let sub: Qrels = qrels
            .iter()
            .filter(|(b, _)| categories.get(*b).is_some_and(|c| members.contains(c)))
            .map(|(b, r)| (b.clone(), r.clone()))
            .collect();
        if !sub.is_empty() {
            by_category.insert(name.to_string(), MetricSet::compute(results, &sub)?);
        }
    }
    Ok(MetricsReport {
        overall,
        by_category,
        categories: categories.clone(),
    })
}

#[cfg(test)]
mod tests;
