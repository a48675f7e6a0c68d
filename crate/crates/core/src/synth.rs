//! Seeded synthetic embedding corpora for tests and benchmarks.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::embed::{normalize, DocMatrices, EmbeddingMatrix, MatrixKind};

pub fn gaussian_unit(rng: &mut impl Rng, dim: usize) -> Vec<f32> {
    let mut v: Vec<f32> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&mut v);
    v
}

/// Token embeddings drawn around a fixed set of topic directions, so that
/// rows cluster the way contextual token embeddings do.
#[derive(Debug, Clone)]
pub struct TopicModel {
    pub dim: usize,
    pub topics: Vec<Vec<f32>>,
    /// Std-dev of the isotropic noise added before normalization.
    pub spread: f32,
    /// Topic frequencies; uniform when absent.
    frequencies: Option<WeightedIndex<f64>>,
}

impl TopicModel {
    pub fn new(dim: usize, n_topics: usize, spread: f32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            dim,
            topics: (0..n_topics)
                .map(|_| gaussian_unit(&mut rng, dim))
                .collect(),
            spread,
            frequencies: None,
        }
    }

    /// Draw topic `r` with probability proportional to `1 / (r + 1)^exponent`,
    /// like token frequencies in text.
    pub fn with_zipf(mut self, exponent: f64) -> Self {
        let weights = (0..self.topics.len()).map(|r| (r as f64 + 1.0).powf(-exponent));
        self.frequencies = Some(WeightedIndex::new(weights).expect("at least one topic"));
        self
    }

    pub fn sample_topic(&self, rng: &mut impl Rng) -> usize {
        match &self.frequencies {
            Some(f) => f.sample(rng),
            None => rng.random_range(0..self.topics.len()),
        }
    }

    pub fn sample_row(&self, rng: &mut impl Rng) -> Vec<f32> {
        let t = self.sample_topic(rng);
        self.row_near(t, rng)
    }

    /// One noisy occurrence of `topic`.
    pub fn row_near(&self, topic: usize, rng: &mut impl Rng) -> Vec<f32> {
        let mut v: Vec<f32> = self.topics[topic]
            .iter()
            .map(|&x| {
                let n: f32 = StandardNormal.sample(rng);
                x + self.spread * n
            })
            .collect();
        normalize(&mut v);
        v
    }

    pub fn sample_matrix(
        &self,
        rng: &mut impl Rng,
        rows: usize,
        kind: MatrixKind,
    ) -> EmbeddingMatrix {
        let mut data = Vec::with_capacity(rows * self.dim);
        for _ in 0..rows {
            data.extend(self.sample_row(rng));
        }
        EmbeddingMatrix::new(self.dim, data, kind)
    }

    /// `n_docs` documents named `doc-000000…` with `min_rows..=max_rows` rows.
    pub fn sample_docs(
        &self,
        n_docs: usize,
        min_rows: usize,
        max_rows: usize,
        seed: u64,
    ) -> DocMatrices {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DocMatrices::new(
            (0..n_docs)
                .map(|i| {
                    let rows = rng.random_range(min_rows..=max_rows);
                    (
                        format!("doc-{i:06}"),
                        self.sample_matrix(&mut rng, rows, MatrixKind::Document),
                    )
                })
                .collect(),
        )
    }
}

/// Documents grouped into families; each family draws its rows from a
/// private set of topics, the way hunks touching the same code share
/// identifiers.
#[derive(Debug, Clone)]
pub struct Families {
    pub docs: DocMatrices,
    /// Topic set of each family; document `i` belongs to family
    /// `i / family_size`.
    pub topics: Vec<Vec<usize>>,
}

impl TopicModel {
    pub fn sample_families(
        &self,
        n_docs: usize,
        family_size: usize,
        topics_per_family: usize,
        rows: (usize, usize),
        seed: u64,
    ) -> Families {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_families = n_docs.div_ceil(family_size.max(1));
        let topics: Vec<Vec<usize>> = (0..n_families)
            .map(|_| {
                (0..topics_per_family)
                    .map(|_| self.sample_topic(&mut rng))
                    .collect()
            })
            .collect();
        let docs = (0..n_docs)
            .map(|i| {
                let own = &topics[i / family_size.max(1)];
                let n = rng.random_range(rows.0..=rows.1);
                let data = (0..n)
                    .flat_map(|_| {
                        let t = own[rng.random_range(0..own.len())];
                        self.row_near(t, &mut rng)
                    })
                    .collect();
                (
                    format!("doc-{i:06}"),
                    EmbeddingMatrix::new(self.dim, data, MatrixKind::Document),
                )
            })
            .collect();
        Families {
            docs: DocMatrices::new(docs),
            topics,
        }
    }

    /// A query drawn from one family's topics.
    pub fn sample_family_query(
        &self,
        topics: &[usize],
        rows: usize,
        rng: &mut impl Rng,
    ) -> EmbeddingMatrix {
        let data = (0..rows)
            .flat_map(|_| {
                let t = topics[rng.random_range(0..topics.len())];
                self.row_near(t, rng)
            })
            .collect();
        EmbeddingMatrix::new(self.dim, data, MatrixKind::Query)
    }
}

/// Documents of independent uniform-direction rows.
pub fn random_docs(
    n_docs: usize,
    min_rows: usize,
    max_rows: usize,
    dim: usize,
    seed: u64,
) -> DocMatrices {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DocMatrices::new(
        (0..n_docs)
            .map(|i| {
                let rows = rng.random_range(min_rows..=max_rows);
                let data = (0..rows)
                    .flat_map(|_| gaussian_unit(&mut rng, dim))
                    .collect();
                (
                    format!("doc-{i:06}"),
                    EmbeddingMatrix::new(dim, data, MatrixKind::Document),
                )
            })
            .collect(),
    )
}

pub fn random_query(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows)
        .flat_map(|_| gaussian_unit(&mut rng, dim))
        .collect();
    EmbeddingMatrix::new(dim, data, MatrixKind::Query)
}

/// Shape of a generated corpus in which every bug report shares a handful of
/// distinctive words with exactly one hunk of its gold changeset.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSpec {
    pub bugs: usize,
    /// Changesets linked to no bug.
    pub noise_changesets: usize,
    pub files_per_changeset: (usize, usize),
    pub hunks_per_file: (usize, usize),
    pub lines_per_hunk: (usize, usize),
    pub words_per_line: (usize, usize),
    /// Size of the shared vocabulary every text draws from.
    pub common_words: usize,
    /// Distinctive words per bug.
    pub signature_words: usize,
    /// Common words mixed into each bug report.
    pub report_words: usize,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            bugs: 40,
            noise_changesets: 40,
            files_per_changeset: (1, 2),
            hunks_per_file: (1, 3),
            lines_per_hunk: (3, 8),
            words_per_line: (3, 7),
            common_words: 80,
            signature_words: 3,
            report_words: 20,
            seed: 7,
        }
    }
}

/// Generated corpus plus the hunk each bug was planted in.
#[derive(Debug, Clone)]
pub struct Planted {
    pub corpus: crate::corpus::Corpus,
    /// bug id → planted hunk's document id.
    pub planted_hunks: std::collections::BTreeMap<String, String>,
}

fn random_word(rng: &mut impl Rng, len: usize) -> String {
    (0..len)
        .map(|_| char::from(b'a' + rng.random_range(0..26u8)))
        .collect()
}

fn distinct_words(
    rng: &mut impl Rng,
    n: usize,
    len: (usize, usize),
    taken: &mut std::collections::HashSet<String>,
) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let l = rng.random_range(len.0..=len.1);
        let w = random_word(rng, l);
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn class_name(rng: &mut impl Rng) -> String {
    let mut name = String::new();
    for _ in 0..2 {
        let l = rng.random_range(3..=6);
        let w = random_word(rng, l);
        let mut c = w.chars();
        let first = c.next().unwrap().to_ascii_uppercase();
        name.push(first);
        name.extend(c);
    }
    name
}

pub fn planted_corpus(spec: &PlantedSpec) -> Planted {
    use crate::corpus::{
        doc_id, BugReport, Changeset, Corpus, DiffLine, FileDiff, GoldLink, Hunk, LineKind,
    };
    use chrono::{TimeZone, Utc};

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut taken = std::collections::HashSet::new();
    let common = distinct_words(&mut rng, spec.common_words, (3, 7), &mut taken);
    let pick = |rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)| rng.random_range(lo..=hi);
    let line_text = |rng: &mut ChaCha8Rng| {
        let n = pick(rng, spec.words_per_line).max(1);
        let words: Vec<&str> = (0..n)
            .map(|_| common[rng.random_range(0..common.len())].as_str())
            .collect();
        format!("{}({});", words[0], words[1..].join(", "))
    };
    let base = Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap();

    let total = spec.bugs + spec.noise_changesets;
    let mut changesets = Vec::with_capacity(total);
    for c in 0..total {
        let mut files = Vec::new();
        for _ in 0..pick(&mut rng, spec.files_per_changeset) {
            let mut hunks = Vec::new();
            let mut start = 1u32;
            for _ in 0..pick(&mut rng, spec.hunks_per_file) {
                let n = pick(&mut rng, spec.lines_per_hunk).max(1);
                let mut lines: Vec<DiffLine> = (0..n)
                    .map(|_| {
                        let kind = match rng.random_range(0..10) {
                            0..=4 => LineKind::Context,
                            5..=7 => LineKind::Added,
                            _ => LineKind::Removed,
                        };
                        DiffLine::new(kind, line_text(&mut rng))
                    })
                    .collect();
                if !lines.iter().any(|l| l.kind != LineKind::Context) {
                    let i = rng.random_range(0..lines.len());
                    lines[i].kind = LineKind::Added;
                }
                let hunk = Hunk {
                    old_start: start,
                    new_start: start,
                    lines,
                };
                start += hunk.old_len().max(hunk.new_len()) as u32 + 10;
                hunks.push(hunk);
            }
            files.push(FileDiff {
                path: format!("src/main/java/org/demo/{}.java", class_name(&mut rng)),
                hunks,
            });
        }
        changesets.push(Changeset {
            changeset_id: format!("c{c:05}"),
            log_message: format!("change {c}"),
            files,
            committed_at: Some(base + chrono::Duration::hours(c as i64)),
        });
    }

    let mut bugs = Vec::with_capacity(spec.bugs);
    let mut links = Vec::with_capacity(spec.bugs);
    let mut planted_hunks = std::collections::BTreeMap::new();
    // gold changesets are spread over the history
    let mut gold: Vec<usize> = rand::seq::index::sample(&mut rng, total, spec.bugs).into_vec();
    gold.sort_unstable();
    for (b, &c) in gold.iter().enumerate() {
        let signature = distinct_words(&mut rng, spec.signature_words, (8, 11), &mut taken);
        let cs = &mut changesets[c];
        let f = rng.random_range(0..cs.files.len());
        let h = rng.random_range(0..cs.files[f].hunks.len());
        let hunk = &mut cs.files[f].hunks[h];
        let changed: Vec<usize> = (0..hunk.lines.len())
            .filter(|&i| hunk.lines[i].kind != LineKind::Context)
            .collect();
        for w in &signature {
            let i = changed[rng.random_range(0..changed.len())];
            hunk.lines[i].text.push_str(&format!(" {w}();"));
        }
        let bug_id = format!("BUG-{b:04}");
        planted_hunks.insert(bug_id.clone(), doc_id(&cs.changeset_id, Some(f), Some(h)));
        let mut words: Vec<String> = (0..spec.report_words)
            .map(|_| common[rng.random_range(0..common.len())].clone())
            .collect();
        for w in &signature[1.min(signature.len())..] {
            let at = rng.random_range(0..=words.len());
            words.insert(at, w.clone());
        }
        let summary = match signature.first() {
            Some(w) => format!("Failure in {w}"),
            None => "Failure".to_string(),
        };
        bugs.push(BugReport {
            bug_id: bug_id.clone(),
            summary,
            description: words.join(" "),
            opened_at: Some(
                base + chrono::Duration::hours(c as i64) + chrono::Duration::minutes(30),
            ),
        });
        links.push(GoldLink {
            bug_id,
            changeset_id: cs.changeset_id.clone(),
        });
    }
    Planted {
        corpus: Corpus::new(changesets, bugs, links).expect("generated ids are unique"),
        planted_hunks,
    }
}
