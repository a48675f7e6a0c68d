use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::docs::Document;
use super::ingest::{BugReport, GoldLink};
use super::CorpusError;

/// Training example: a bug report, one of its bug-inducing documents and a
/// document from a changeset that did not induce it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub bug_id: String,
    pub positive_doc: String,
    pub negative_doc: String,
}

/// One triplet per (bug, positive document); negatives are drawn uniformly
/// from documents whose changeset is not gold for that bug.
pub fn build_triplets(
    links: &[GoldLink],
    docs: &[Document],
    seed: u64,
) -> Result<Vec<Triplet>, CorpusError> {
    let mut gold: HashMap<&str, HashSet<&str>> = HashMap::new();
    for l in links {
        gold.entry(l.bug_id.as_str())
            .or_default()
            .insert(l.changeset_id.as_str());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut emitted: HashSet<(&str, &str)> = HashSet::new();
    let mut out = Vec::new();
    for link in links {
        let bug_gold = &gold[link.bug_id.as_str()];
        let positives: Vec<&Document> = docs
            .iter()
            .filter(|d| d.origin_changeset == link.changeset_id)
            .collect();
        if positives.is_empty() {
            return Err(CorpusError::NoPositiveDocuments(link.changeset_id.clone()));
        }
        let negatives: Vec<&Document> = docs
            .iter()
            .filter(|d| !bug_gold.contains(d.origin_changeset.as_str()))
            .collect();
        if negatives.is_empty() {
            return Err(CorpusError::NoNegativeAvailable(link.bug_id.clone()));
        }
        for pos in positives {
            if !emitted.insert((link.bug_id.as_str(), pos.doc_id.as_str())) {
                continue;
            }
            let neg = negatives[rng.random_range(0..negatives.len())];
            out.push(Triplet {
                bug_id: link.bug_id.clone(),
                positive_doc: pos.doc_id.clone(),
                negative_doc: neg.doc_id.clone(),
            });
        }
    }
    Ok(out)
}

/// Chronological split: links ordered by their bug's opening date (ties by
/// bug id), first ⌈n/2⌉ for training.
pub fn split_train_test(
    links: &[GoldLink],
    bugs: &[BugReport],
) -> Result<(Vec<GoldLink>, Vec<GoldLink>), CorpusError> {
    let opened: HashMap<&str, _> = bugs
        .iter()
        .map(|b| (b.bug_id.as_str(), b.opened_at))
        .collect();
    let mut keyed = Vec::with_capacity(links.len());
    for l in links {
        let at = opened
            .get(l.bug_id.as_str())
            .ok_or_else(|| CorpusError::UnknownBug(l.bug_id.clone()))?
            .ok_or_else(|| CorpusError::MissingTimestamp(l.bug_id.clone()))?;
        keyed.push((at, l));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.bug_id.cmp(&b.1.bug_id)));
    let cut = links.len().div_ceil(2);
    let mut sorted = keyed.into_iter().map(|(_, l)| l.clone());
    let train = sorted.by_ref().take(cut).collect();
    let test = sorted.collect();
    Ok((train, test))
}
