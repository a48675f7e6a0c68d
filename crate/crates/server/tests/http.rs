use std::sync::Arc;

use fbl_client::{Client, ClientError};
use fbl_core::api::{
    self, BatchQueryRequest, Candidates, EvaluateRequest, QueryParams, QueryRequest,
};
use fbl_core::config::Config;
use fbl_core::embed::LinearProjection;
use fbl_core::pipeline::{build_vocab, LoadedEmbedder, Session};
use fbl_core::retrieve::{Aggregation, RankMode};
use fbl_core::synth::{planted_corpus, PlantedSpec};
use fbl_core::ErrorKind;
use tokio::sync::oneshot;

fn session() -> Session {
    let corpus = planted_corpus(&PlantedSpec {
        bugs: 8,
        noise_changesets: 8,
        signature_words: 5,
        report_words: 2,
        ..PlantedSpec::default()
    })
    .corpus;
    let cfg = Config {
        d_in: 64,
        d_out: 16,
        partitions: 8,
        nprobe: 8,
        subspaces: 4,
        codebook_size: 16,
        ..Config::default()
    };
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

struct Running {
    client: Client,
    session: Arc<Session>,
    stop: Option<oneshot::Sender<()>>,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

async fn start() -> Running {
    let session = Arc::new(session());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = oneshot::channel();
    let task = tokio::spawn(fbl_server::serve(listener, session.clone(), async {
        rx.await.ok();
    }));
    Running {
        client: Client::new(format!("http://{addr}/")),
        session,
        stop: Some(tx),
        task,
    }
}

impl Running {
    async fn shutdown(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.task.await.unwrap().unwrap();
    }
}

fn api_kind(e: ClientError) -> (u16, ErrorKind) {
    match e {
        ClientError::Api { status, body } => (status, body.kind),
        other => panic!("expected an API error, got {other}"),
    }
}

#[tokio::test]
async fn health_and_manifest() {
    let s = start().await;
    let h = s.client.health().await.unwrap();
    assert_eq!(h.status, "ok");
    assert_eq!(h.documents, s.session.docs.len());
    assert_eq!(h.embeddings, s.session.index.len());
    let m = s.client.manifest().await.unwrap();
    assert_eq!(m.vocab_hash, s.session.vocab.content_hash());
    assert_eq!(m.documents, s.session.docs.len());
    s.shutdown().await;
}

#[tokio::test]
async fn query_matches_in_process_answer() {
    let s = start().await;
    for bug in &s.session.corpus.bugs {
        let req = QueryRequest {
            bug_id: Some(bug.bug_id.clone()),
            params: QueryParams {
                topk: Some(5),
                ..QueryParams::default()
            },
            ..QueryRequest::default()
        };
        let remote = s.client.query(&req).await.unwrap();
        assert_eq!(remote, api::query(&s.session, &req).unwrap());
        assert_eq!(remote.mode, RankMode::TwoStage);
        assert!(remote.results.len() <= 5);
        assert!(remote
            .results
            .iter()
            .enumerate()
            .all(|(i, r)| r.rank == i + 1));
    }
    s.shutdown().await;
}

#[tokio::test]
async fn exhaustive_query_equals_exact() {
    let s = start().await;
    let text = s.session.corpus.bugs[0].query_text();
    let exhaustive = QueryRequest {
        text: Some(text.clone()),
        params: QueryParams {
            topk: Some(usize::MAX),
            nprobe: Some(s.session.config.partitions),
            candidates: Some(Candidates::ALL),
            ..QueryParams::default()
        },
        ..QueryRequest::default()
    };
    let mut exact = exhaustive.clone();
    exact.params.exact = true;
    let a = s.client.query(&exhaustive).await.unwrap();
    let b = s.client.query(&exact).await.unwrap();
    assert_eq!(a.bug_id, api::ADHOC_BUG_ID);
    assert_eq!(a.results, b.results);
    assert_eq!(b.mode, RankMode::Exact);
    s.shutdown().await;
}

#[tokio::test]
async fn aggregated_batch_puts_gold_changeset_first() {
    let s = start().await;
    let req = BatchQueryRequest {
        bug_ids: None,
        params: QueryParams {
            topk: Some(1),
            aggregate: Some(Aggregation::Max),
            ..QueryParams::default()
        },
    };
    let batch = s.client.query_batch(&req).await.unwrap();
    assert_eq!(batch.results.len(), s.session.corpus.bugs.len());
    let qrels = s.session.corpus.qrels();
    for r in &batch.results {
        assert_eq!(r.results.len(), 1);
        assert!(
            qrels[&r.bug_id].contains(&r.results[0].changeset_id),
            "{}",
            r.bug_id
        );
    }
    s.shutdown().await;
}

#[tokio::test]
async fn evaluate_and_tokenize() {
    let s = start().await;
    let report = s
        .client
        .evaluate(&EvaluateRequest::default())
        .await
        .unwrap()
        .report;
    assert_eq!(report.overall.queries, s.session.corpus.qrels().len());
    assert!((report.overall.mrr - 1.0).abs() < 1e-12, "{report:?}");

    let word = &s.session.corpus.bugs[0].summary;
    let t = s.client.tokenize(word).await.unwrap();
    assert_eq!(t.ids, s.session.vocab.tokenize(word));
    assert_eq!(t.tokens.len(), t.ids.len());
    s.shutdown().await;
}

#[tokio::test]
async fn errors_carry_kind_and_status() {
    let s = start().await;
    let unknown = QueryRequest {
        bug_id: Some("NOPE-1".into()),
        ..QueryRequest::default()
    };
    assert_eq!(
        api_kind(s.client.query(&unknown).await.unwrap_err()),
        (404, ErrorKind::Data)
    );

    let empty = QueryRequest::default();
    assert_eq!(
        api_kind(s.client.query(&empty).await.unwrap_err()),
        (400, ErrorKind::Usage)
    );

    let bad_probe = QueryRequest {
        text: Some("anything".into()),
        params: QueryParams {
            nprobe: Some(10_000),
            ..QueryParams::default()
        },
        ..QueryRequest::default()
    };
    assert_eq!(
        api_kind(s.client.query(&bad_probe).await.unwrap_err()),
        (400, ErrorKind::Usage)
    );

    let raw = reqwest::Client::new()
        .post(format!("{}/v1/query", s.client.base_url()))
        .header("content-type", "application/json")
        .body("{not json")
        .send()
        .await
        .unwrap();
    assert_eq!(raw.status().as_u16(), 400);
    let body: serde_json::Value = raw.json().await.unwrap();
    assert_eq!(body["kind"], "usage");

    let missing = reqwest::get(format!("{}/v2/nothing", s.client.base_url()))
        .await
        .unwrap();
    assert_eq!(missing.status().as_u16(), 404);
    s.shutdown().await;
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    let err = Client::new(format!("http://{addr}"))
        .health()
        .await
        .unwrap_err();
    assert!(matches!(err, ClientError::Transport { .. }));
    assert_eq!(err.kind(), ErrorKind::Data);
}
