use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use fbl_core::corpus::origin_of;
use fbl_core::synth::{planted_corpus, Planted, PlantedSpec};

const INDEX_FLAGS: &[&str] = &[
    "--d-in",
    "64",
    "--d-out",
    "16",
    "--partitions",
    "8",
    "--nprobe",
    "8",
    "--subspaces",
    "4",
    "--codebook-size",
    "16",
];

struct Fixture {
    dir: tempfile::TempDir,
    planted: Planted,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn session(&self) -> PathBuf {
        self.path("session")
    }
}

fn fbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbl"))
        .args(args)
        .env_remove("FBL_SESSION")
        .env_remove("FBL_SERVER")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = fbl(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit code and the structured error line on stderr.
fn failure(args: &[&str]) -> (i32, serde_json::Value) {
    let out = fbl(args);
    assert!(!out.status.success(), "{args:?} succeeded");
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].is_string());
    (out.status.code().unwrap(), err)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> Fixture {
    let planted = planted_corpus(&PlantedSpec {
        bugs: 8,
        noise_changesets: 8,
        signature_words: 5,
        report_words: 2,
        ..PlantedSpec::default()
    });
    let f = Fixture {
        dir: tempfile::tempdir().unwrap(),
        planted,
    };
    let (cs, bugs, links, corpus) = (
        f.path("changesets.jsonl"),
        f.path("bugs.jsonl"),
        f.path("links.jsonl"),
        f.path("corpus.json"),
    );
    f.planted.corpus.write_jsonl(&cs, &bugs, &links).unwrap();
    let summary: serde_json::Value = serde_json::from_str(&ok(&[
        "ingest",
        "--changesets",
        s(&cs),
        "--bugs",
        s(&bugs),
        "--links",
        s(&links),
        "--out",
        s(&corpus),
    ]))
    .unwrap();
    assert_eq!(summary["bugs"], 8);
    let mut args = vec!["index", "--corpus", s(&corpus)];
    let session = f.session();
    args.extend(["--session", s(&session)]);
    args.extend(INDEX_FLAGS);
    ok(&args);
    f
}

fn records(jsonl: &str) -> Vec<serde_json::Value> {
    jsonl
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn exhaustive_flags_equal_exact_output() {
    let f = fixture();
    let session = f.session();
    let base = ["query", "--session", s(&session), "--topk", "100000"];
    let exhaustive = ok(&[&base[..], &["--nprobe", "8", "--candidates", "all"]].concat());
    let exact = ok(&[&base[..], &["--exact"]].concat());
    assert!(!exhaustive.is_empty());
    assert_eq!(exhaustive, exact);
}

#[test]
fn topk_one_prints_a_single_line() {
    let f = fixture();
    let session = f.session();
    let bug = &f.planted.corpus.bugs[0].bug_id;
    let out = ok(&[
        "query",
        "--session",
        s(&session),
        "--bug",
        bug,
        "--topk",
        "1",
    ]);
    assert_eq!(out.lines().count(), 1);
    assert_eq!(records(&out)[0]["bug_id"], bug.as_str());
}

#[test]
fn planted_hunk_changeset_ranks_first() {
    let f = fixture();
    let session = f.session();
    for (bug, hunk) in &f.planted.planted_hunks {
        let out = ok(&[
            "query",
            "--session",
            s(&session),
            "--bug",
            bug,
            "--topk",
            "1",
            "--aggregate",
            "max",
        ]);
        assert_eq!(records(&out)[0]["changeset_id"], origin_of(hunk), "{bug}");
    }
}

#[test]
fn bug_file_and_text_queries_agree_with_stored_bugs() {
    let f = fixture();
    let session = f.session();
    let bugs = f.path("bugs.jsonl");
    let bug = &f.planted.corpus.bugs[2];
    let from_file = ok(&[
        "query",
        "--session",
        s(&session),
        "--bug-file",
        s(&bugs),
        "--topk",
        "3",
    ]);
    let stored = ok(&["query", "--session", s(&session), "--topk", "3"]);
    assert_eq!(from_file, stored);
    let text = bug.query_text();
    let by_text = ok(&[
        "query",
        "--session",
        s(&session),
        "--text",
        &text,
        "--id",
        &bug.bug_id,
        "--topk",
        "3",
    ]);
    let by_id = ok(&[
        "query",
        "--session",
        s(&session),
        "--bug",
        &bug.bug_id,
        "--topk",
        "3",
    ]);
    assert_eq!(by_text, by_id);
    let trec = ok(&[
        "query",
        "--session",
        s(&session),
        "--bug",
        &bug.bug_id,
        "--topk",
        "3",
        "--format",
        "trec",
    ]);
    let first: Vec<&str> = trec.lines().next().unwrap().split(' ').collect();
    assert_eq!(
        first[..4],
        [
            bug.bug_id.as_str(),
            "Q0",
            records(&by_id)[0]["doc_id"].as_str().unwrap(),
            "1"
        ]
    );
}

#[test]
fn evaluating_a_run_file_matches_session_evaluation() {
    let f = fixture();
    let session = f.session();
    let run = ok(&["query", "--session", s(&session), "--topk", "100000"]);
    let run_path = f.path("run.jsonl");
    std::fs::write(&run_path, run).unwrap();
    let from_runs: serde_json::Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--session",
        s(&session),
        "--runs",
        s(&run_path),
    ]))
    .unwrap();
    let direct: serde_json::Value =
        serde_json::from_str(&ok(&["evaluate", "--session", s(&session)])).unwrap();
    assert_eq!(from_runs, direct);
    assert_eq!(direct["overall"]["mrr"], 1.0);

    let links = f.path("links.jsonl");
    let bare: serde_json::Value = serde_json::from_str(&ok(&[
        "evaluate",
        "--runs",
        s(&run_path),
        "--links",
        s(&links),
    ]))
    .unwrap();
    assert_eq!(bare["overall"], direct["overall"]);
}

#[test]
fn trained_projection_is_used_and_checked() {
    let f = fixture();
    let corpus = f.path("corpus.json");
    let proj = f.path("projection.fble");
    let trained: serde_json::Value = serde_json::from_str(&ok(&[
        "train-projection",
        "--corpus",
        s(&corpus),
        "--d-in",
        "64",
        "--d-out",
        "16",
        "--lr",
        "0.1",
        "--out",
        s(&proj),
    ]))
    .unwrap();
    assert_eq!(
        trained["trace"]["epoch_losses"].as_array().unwrap().len(),
        4
    );

    let dir = f.path("trained");
    let mut args = vec![
        "index",
        "--corpus",
        s(&corpus),
        "--session",
        s(&dir),
        "--projection",
        s(&proj),
    ];
    args.extend(INDEX_FLAGS);
    ok(&args);
    let bug = &f.planted.corpus.bugs[0].bug_id;
    ok(&[
        "query",
        "--session",
        s(&dir),
        "--projection",
        s(&proj),
        "--bug",
        bug,
    ]);

    let session = f.session();
    let (code, err) = failure(&[
        "query",
        "--session",
        s(&session),
        "--projection",
        s(&proj),
        "--bug",
        bug,
    ]);
    assert_eq!((code, err["kind"].as_str().unwrap()), (2, "data"), "{err}");
    assert!(err["error"].as_str().unwrap().contains("projection"));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let f = fixture();
    let session = f.session();

    let (code, err) = failure(&["query", "--bogus-flag"]);
    assert_eq!((code, err["kind"].as_str().unwrap()), (1, "usage"));
    let (code, _) = failure(&["query", "--bug", "B"]);
    assert_eq!(code, 1, "no session given");
    let bug = &f.planted.corpus.bugs[0].bug_id;
    let (code, _) = failure(&[
        "query",
        "--session",
        s(&session),
        "--bug",
        bug,
        "--candidates",
        "0",
    ]);
    assert_eq!(code, 1);
    let (code, err) = failure(&[
        "query",
        "--session",
        s(&session),
        "--bug",
        bug,
        "--nprobe",
        "99",
    ]);
    assert_eq!(code, 1, "{err}");

    let (code, err) = failure(&["query", "--session", s(&session), "--bug", "NO-SUCH-BUG"]);
    assert_eq!((code, err["kind"].as_str().unwrap()), (2, "data"));
    let missing = f.path("nowhere");
    let (code, _) = failure(&["query", "--session", s(&missing), "--bug", "B"]);
    assert_eq!(code, 2);

    let broken = f.path("broken.jsonl");
    std::fs::write(
        &broken,
        "{\"id\":\"c1\",\"log\":\"x\",\"diff\":\"@@ garbage\"}\n",
    )
    .unwrap();
    let (cs, links, out) = (
        f.path("bugs.jsonl"),
        f.path("links.jsonl"),
        f.path("x.json"),
    );
    let (code, _) = failure(&[
        "ingest",
        "--changesets",
        s(&broken),
        "--bugs",
        s(&cs),
        "--links",
        s(&links),
        "--out",
        s(&out),
    ]);
    assert_eq!(code, 2);

    assert!(fbl(&["--help"]).status.success());
}

#[test]
fn session_directory_comes_from_the_environment() {
    let f = fixture();
    let bug = &f.planted.corpus.bugs[0].bug_id;
    let out = Command::new(env!("CARGO_BIN_EXE_fbl"))
        .args(["query", "--bug", bug, "--topk", "2"])
        .env("FBL_SESSION", f.session())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(out.stdout.iter().filter(|&&b| b == b'\n').count(), 2);
}

#[test]
fn bench_emits_one_row_per_size() {
    let f = fixture();
    let session = f.session();
    let csv = ok(&[
        "bench",
        "--session",
        s(&session),
        "--sizes",
        "5,all",
        "--queries",
        "3",
    ]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "documents,embeddings,queries,exact_ms,two_stage_ms,ratio"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("5,"));
    let full: Vec<&str> = lines[2].split(',').collect();
    let hunks = f
        .planted
        .corpus
        .documents(fbl_core::corpus::Granularity::Hunk)
        .len();
    assert_eq!(full[0], hunks.to_string());
    assert_eq!(full[2], "3");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn query_through_server_matches_local_run() {
    let f = fixture();
    let session = f.session();
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let addr = format!("127.0.0.1:{port}");
    let _server = Server(
        Command::new(env!("CARGO_BIN_EXE_fbl"))
            .args(["serve", "--session", s(&session), "--addr", &addr])
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let start = Instant::now();
    while TcpStream::connect(&addr).is_err() {
        assert!(
            start.elapsed() < Duration::from_secs(30),
            "server did not come up"
        );
        std::thread::sleep(Duration::from_millis(50));
    }
    let url = format!("http://{addr}");
    let remote = ok(&["query", "--server", &url, "--topk", "3"]);
    let local = ok(&["query", "--session", s(&session), "--topk", "3"]);
    assert_eq!(remote, local);

    let remote_eval = ok(&["evaluate", "--server", &url]);
    assert_eq!(remote_eval, ok(&["evaluate", "--session", s(&session)]));

    let (code, err) = failure(&["query", "--server", &url, "--bug", "NO-SUCH-BUG"]);
    assert_eq!((code, err["kind"].as_str().unwrap()), (2, "data"));
    let (code, err) = failure(&["query", "--server", &url, "--strategy", "d", "--bug", "x"]);
    assert!(err["error"].as_str().unwrap().contains("strategy"));
    assert_eq!(code, 2);
}
