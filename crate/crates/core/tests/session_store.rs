use std::path::Path;

use fbl_core::config::Config;
use fbl_core::embed::LinearProjection;
use fbl_core::pipeline::{build_vocab, LoadedEmbedder, QueryOptions, Session};
use fbl_core::retrieve::{aggregate_to_changeset, Aggregation};
use fbl_core::store::{self, Expectations, StoreError};
use fbl_core::synth::{planted_corpus, PlantedSpec};
use fbl_core::ErrorKind;

fn small_config() -> Config {
    Config {
        d_in: 64,
        d_out: 16,
        partitions: 8,
        nprobe: 8,
        subspaces: 4,
        codebook_size: 16,
        ..Config::default()
    }
}

fn session() -> Session {
    let corpus = planted_corpus(&PlantedSpec {
        bugs: 12,
        noise_changesets: 12,
        report_words: 4,
        ..PlantedSpec::default()
    })
    .corpus;
    let cfg = small_config();
    let vocab = build_vocab(&corpus, 1);
    let projection = LinearProjection::seeded(cfg.d_in, cfg.d_out, cfg.seed).unwrap();
    Session::build(
        corpus,
        vocab,
        LoadedEmbedder::hash(cfg.seed, cfg.d_in),
        projection,
        cfg,
    )
    .unwrap()
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn save_load_round_trip() {
    let s = session();
    let dir = tempfile::tempdir().unwrap();
    let saved = store::save_session(dir.path(), &s).unwrap();
    assert_eq!(store::read_manifest(dir.path()).unwrap(), saved);

    let loaded = store::load_session(dir.path(), &Expectations::default()).unwrap();
    assert_eq!(loaded.config, s.config);
    assert_eq!(loaded.corpus, s.corpus);
    assert_eq!(loaded.vocab.content_hash(), s.vocab.content_hash());
    assert_eq!(loaded.projection, s.projection);
    assert_eq!(loaded.docs, s.docs);
    assert_eq!(loaded.index.to_bytes(), s.index.to_bytes());

    let opts = QueryOptions::from_config(&s.config);
    for bug in &s.corpus.bugs {
        assert_eq!(
            loaded.rank_bug(bug, &opts).unwrap(),
            s.rank_bug(bug, &opts).unwrap()
        );
    }
}

#[test]
fn reserialization_is_byte_identical() {
    let s = session();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    store::save_session(a.path(), &s).unwrap();
    let loaded = store::load_session(a.path(), &Expectations::default()).unwrap();
    store::save_session(b.path(), &loaded).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
}

#[test]
fn mismatched_vocab_hash_is_rejected() {
    let s = session();
    let dir = tempfile::tempdir().unwrap();
    store::save_session(dir.path(), &s).unwrap();
    let expect = Expectations {
        vocab_hash: Some("0".repeat(64)),
        ..Expectations::default()
    };
    match store::load_session(dir.path(), &expect) {
        Err(StoreError::ConfigMismatch { field, .. }) => assert_eq!(field, "vocab hash"),
        other => panic!("expected ConfigMismatch, got {other:?}"),
    }
    let ok = Expectations {
        vocab_hash: Some(s.vocab.content_hash()),
        d_out: Some(16),
        ..Expectations::default()
    };
    assert!(store::load_session(dir.path(), &ok).is_ok());
}

#[test]
fn corrupted_magic_names_the_file() {
    let s = session();
    for file in [store::INDEX_FILE, store::PROJECTION_FILE, store::DOCS_FILE] {
        let dir = tempfile::tempdir().unwrap();
        store::save_session(dir.path(), &s).unwrap();
        let path = dir.path().join(file);
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, bytes).unwrap();
        let err = store::load_session(dir.path(), &Expectations::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains(file), "{file}: {msg}");
        assert_eq!(fbl_core::Error::from(err).kind(), ErrorKind::Data);
    }
}

#[test]
fn changed_payload_fails_the_checksum() {
    let s = session();
    let dir = tempfile::tempdir().unwrap();
    store::save_session(dir.path(), &s).unwrap();
    let path = dir.path().join(store::DOCS_FILE);
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x55;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(
        store::load_session(dir.path(), &Expectations::default()),
        Err(StoreError::Checksum { file }) if file == store::DOCS_FILE
    ));
}

#[test]
fn missing_manifest_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        store::load_session(dir.path(), &Expectations::default()),
        Err(StoreError::Io { .. })
    ));
}

#[test]
fn exhaustive_two_stage_matches_exact_through_the_pipeline() {
    let s = session();
    let exhaustive = QueryOptions {
        topk: usize::MAX,
        nprobe: s.config.partitions,
        candidates: usize::MAX,
        exact: false,
        aggregate: None,
    };
    let exact = QueryOptions {
        exact: true,
        ..exhaustive
    };
    for bug in &s.corpus.bugs {
        let a = s.rank_bug(bug, &exhaustive).unwrap();
        let b = s.rank_bug(bug, &exact).unwrap();
        assert_eq!(a.entries, b.entries, "{}", bug.bug_id);
    }
}

#[test]
fn planted_hunk_changeset_ranks_first() {
    // a hunk carrying five rare words from the report beats hunks that only
    // share common vocabulary, even through an untrained projection
    let planted = planted_corpus(&PlantedSpec {
        bugs: 6,
        noise_changesets: 6,
        signature_words: 5,
        report_words: 2,
        ..PlantedSpec::default()
    });
    let cfg = small_config();
    let vocab = build_vocab(&planted.corpus, 1);
    let projection = LinearProjection::seeded(cfg.d_in, cfg.d_out, cfg.seed).unwrap();
    let s = Session::build(
        planted.corpus.clone(),
        vocab,
        LoadedEmbedder::hash(cfg.seed, cfg.d_in),
        projection,
        cfg,
    )
    .unwrap();
    let opts = QueryOptions {
        topk: 1,
        aggregate: Some(Aggregation::Max),
        ..QueryOptions::from_config(&s.config)
    };
    for bug in &planted.corpus.bugs {
        let r = s.rank_bug(bug, &opts).unwrap();
        let gold = fbl_core::corpus::origin_of(&planted.planted_hunks[&bug.bug_id]);
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].doc_id, gold, "{}", bug.bug_id);
        let doc_level = s
            .rank_bug(
                bug,
                &QueryOptions {
                    aggregate: None,
                    topk: usize::MAX,
                    ..opts
                },
            )
            .unwrap();
        assert_eq!(
            aggregate_to_changeset(&doc_level, Aggregation::Max).entries[0].doc_id,
            gold
        );
    }
}
