use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fbl_core::api::{
    BatchQueryRequest, Candidates, ErrorBody, EvaluateRequest, QueryParams, QueryRequest,
    QueryResponse,
};
use fbl_core::config::Config;
use fbl_core::corpus::{self, Corpus, Granularity};
use fbl_core::embed::{train_projection, LinearProjection, TripletTrainConfig};
use fbl_core::encode::Strategy;
use fbl_core::pipeline::{self, EmbedderSource, LoadedEmbedder, Session};
use fbl_core::retrieve::{self, Aggregation, RunFormat};
use fbl_core::store;
use fbl_core::ErrorKind;

mod bench;
mod source;

use source::Source;

#[derive(Parser)]
#[command(
    name = "fbl",
    version,
    about = "Locate bug-inducing changesets from bug reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse changesets, bug reports and links into a corpus file.
    Ingest {
        #[arg(long)]
        changesets: PathBuf,
        #[arg(long)]
        bugs: PathBuf,
        #[arg(long)]
        links: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Derive a word-level vocabulary from a corpus.
    Vocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        /// Written to stdout when absent.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Fit the projection on the chronological training half of the links.
    TrainProjection(TrainArgs),
    /// Embed and index a corpus into a session directory.
    Index(IndexArgs),
    /// Rank changesets for bug reports or free text.
    Query(QueryArgs),
    /// Score runs against gold links, or rank and score a session's bugs.
    Evaluate(EvaluateArgs),
    /// Exact against two-stage latency over subsampled corpus sizes, as CSV.
    Bench(bench::BenchArgs),
    /// Serve a session over HTTP.
    Serve {
        #[command(flatten)]
        session: SessionArg,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
}

#[derive(Args)]
struct SessionArg {
    /// Session directory.
    #[arg(long, env = "FBL_SESSION")]
    session: Option<PathBuf>,
}

impl SessionArg {
    fn dir(&self) -> Result<&Path, CliError> {
        self.session.as_deref().ok_or_else(|| {
            CliError::usage("no session directory (pass --session or set FBL_SESSION)")
        })
    }
}

#[derive(Args)]
struct EncodingArgs {
    #[arg(long, default_value = "hunk")]
    granularity: Granularity,
    #[arg(long, default_value = "arcl")]
    strategy: Strategy,
    /// `hash` or `file:<path>`.
    #[arg(long, default_value = "hash")]
    embedder: EmbedderSource,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 768)]
    d_in: usize,
    /// Vocabulary file; derived from the corpus when absent.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

impl EncodingArgs {
    fn config(&self) -> Config {
        Config {
            granularity: self.granularity,
            strategy: self.strategy,
            seed: self.seed,
            d_in: self.d_in,
            ..Config::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    encoding: EncodingArgs,
    #[arg(long, default_value_t = 128)]
    d_out: usize,
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    /// Train on every link instead of the chronological first half.
    #[arg(long)]
    all_links: bool,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct IndexArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[command(flatten)]
    session: SessionArg,
    #[command(flatten)]
    encoding: EncodingArgs,
    /// Trained projection; a seeded random one otherwise.
    #[arg(long)]
    projection: Option<PathBuf>,
    #[arg(long)]
    d_out: Option<usize>,
    #[arg(long, default_value_t = 320)]
    partitions: usize,
    #[arg(long, default_value_t = 16)]
    subspaces: usize,
    #[arg(long, default_value_t = 256)]
    codebook_size: usize,
    /// Default probe count recorded for queries.
    #[arg(long, default_value_t = 16)]
    nprobe: usize,
    /// Default candidate budget recorded for queries.
    #[arg(long, default_value = "1000")]
    candidates: Candidates,
}

#[derive(Args)]
struct QueryParamArgs {
    #[arg(long)]
    topk: Option<usize>,
    #[arg(long)]
    nprobe: Option<usize>,
    /// A count or `all`.
    #[arg(long)]
    candidates: Option<Candidates>,
    /// Score every document with MaxSim, bypassing the index.
    #[arg(long)]
    exact: bool,
    /// Collapse documents onto changesets (`max` or `sum`).
    #[arg(long)]
    aggregate: Option<Aggregation>,
}

impl QueryParamArgs {
    fn params(&self) -> QueryParams {
        QueryParams {
            topk: self.topk,
            nprobe: self.nprobe,
            candidates: self.candidates,
            exact: self.exact,
            aggregate: self.aggregate,
        }
    }
}

#[derive(Args)]
pub(crate) struct TargetArgs {
    #[command(flatten)]
    session: SessionArg,
    /// Query a running server instead of loading the session.
    #[arg(long, env = "FBL_SERVER")]
    server: Option<String>,
    /// Reject the session unless it was built with these settings.
    #[arg(long)]
    granularity: Option<Granularity>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    partitions: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embedder: Option<EmbedderSource>,
    #[arg(long)]
    projection: Option<PathBuf>,
}

#[derive(Args)]
struct QueryArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    params: QueryParamArgs,
    /// Stored bug id; repeatable.
    #[arg(long = "bug")]
    bug_ids: Vec<String>,
    /// JSONL file of bug reports to rank.
    #[arg(long, conflicts_with_all = ["bug_ids", "text"])]
    bug_file: Option<PathBuf>,
    #[arg(long, conflicts_with = "bug_ids")]
    text: Option<String>,
    /// Identifier written for a `--text` query.
    #[arg(long, requires = "text")]
    id: Option<String>,
    #[arg(long, default_value = "jsonl")]
    format: RunFormat,
    #[arg(long, default_value = "fbl")]
    tag: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    target: TargetArgs,
    #[command(flatten)]
    params: QueryParamArgs,
    /// Run file (JSONL or TREC) to score instead of ranking.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Gold links; the session corpus links otherwise.
    #[arg(long)]
    links: Option<PathBuf>,
    /// Restrict to these bugs; repeatable.
    #[arg(long = "bug")]
    bug_ids: Vec<String>,
}

#[derive(Debug)]
pub(crate) struct CliError {
    kind: ErrorKind,
    message: String,
}

impl CliError {
    pub(crate) fn usage(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Usage,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            kind: ErrorKind::Data,
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<fbl_core::Error> for CliError {
    fn from(e: fbl_core::Error) -> Self {
        Self {
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                fbl_core::Error::from(e).into()
            }
        }
    )*};
}

via_core_error!(
    corpus::CorpusError,
    fbl_core::embed::EmbedError,
    fbl_core::eval::EvalError,
    fbl_core::index::IndexError,
    retrieve::RetrieveError,
    store::StoreError
);

impl From<fbl_client::ClientError> for CliError {
    fn from(e: fbl_client::ClientError) -> Self {
        match e {
            fbl_client::ClientError::Api { body, .. } => Self {
                kind: body.kind,
                message: body.error,
            },
            other => Self {
                kind: other.kind(),
                message: other.to_string(),
            },
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_corpus(path: &Path) -> Result<Corpus> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError {
        kind: ErrorKind::Data,
        message: format!("{}: {e}", path.display()),
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    let out = serde_json::to_string_pretty(value).expect("reports serialize");
    println!("{out}");
    Ok(())
}

fn ingest(changesets: &Path, bugs: &Path, links: &Path, out: &Path) -> Result<()> {
    let corpus = Corpus::load_jsonl(changesets, bugs, links)?;
    write_file(
        out,
        &serde_json::to_vec(&corpus).expect("corpus serializes"),
    )?;
    print_json(&serde_json::json!({
        "changesets": corpus.changesets.len(),
        "bugs": corpus.bugs.len(),
        "links": corpus.links.len(),
        "corpus_hash": corpus.content_hash(),
    }))
}

fn vocab(corpus: &Path, min_count: usize, out: Option<&Path>) -> Result<()> {
    if min_count == 0 {
        return Err(CliError::usage("--min-count must be positive"));
    }
    let text = pipeline::build_vocab(&read_corpus(corpus)?, min_count).to_text();
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train(args: &TrainArgs) -> Result<()> {
    let corpus = read_corpus(&args.corpus)?;
    let cfg = Config {
        d_out: args.d_out,
        ..args.encoding.config()
    };
    if cfg.d_out == 0 || cfg.d_out > cfg.d_in {
        return Err(CliError::usage(format!(
            "d_out must be in 1..={}",
            cfg.d_in
        )));
    }
    let vocab = pipeline::load_vocab_or_build(args.encoding.vocab.as_deref(), &corpus)?;
    let embedder = LoadedEmbedder::from_source(&args.encoding.embedder, &cfg)?;
    let links = if args.all_links {
        corpus.links.clone()
    } else {
        corpus::split_train_test(&corpus.links, &corpus.bugs)?.0
    };
    let examples =
        pipeline::triplet_examples(&corpus, &links, &vocab, embedder.embedder.as_ref(), &cfg)?;
    let train_cfg = TripletTrainConfig {
        margin: args.margin,
        learning_rate: args.lr,
        epochs: args.epochs,
        batch_size: args.batch_size,
        seed: cfg.seed,
    };
    let outcome = train_projection(&examples, embedder.spec().d_in(), cfg.d_out, &train_cfg)?;
    write_file(&args.out, &outcome.projection.to_bytes())?;
    print_json(&serde_json::json!({
        "triplets": examples.len(),
        "projection_hash": outcome.projection.content_hash(),
        "trace": outcome.trace,
    }))
}

fn read_projection(path: &Path) -> Result<LinearProjection> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(LinearProjection::from_bytes(
        &bytes,
        &path.display().to_string(),
    )?)
}

fn index(args: &IndexArgs) -> Result<()> {
    let dir = args.session.dir()?;
    let corpus = read_corpus(&args.corpus)?;
    let mut cfg = Config {
        partitions: args.partitions,
        subspaces: args.subspaces,
        codebook_size: args.codebook_size,
        nprobe: args.nprobe,
        candidates: args.candidates.budget(),
        ..args.encoding.config()
    };
    let embedder = LoadedEmbedder::from_source(&args.encoding.embedder, &cfg)?;
    cfg.d_in = embedder.spec().d_in();
    let projection = match &args.projection {
        Some(p) => read_projection(p)?,
        None => LinearProjection::seeded(
            cfg.d_in,
            args.d_out.unwrap_or(Config::default().d_out),
            cfg.seed,
        )?,
    };
    cfg.d_out = args.d_out.unwrap_or(projection.d_out());
    if projection.d_in() != cfg.d_in {
        return Err(CliError::usage(format!(
            "projection input {} differs from embedder dimension {}",
            projection.d_in(),
            cfg.d_in
        )));
    }
    let vocab = pipeline::load_vocab_or_build(args.encoding.vocab.as_deref(), &corpus)?;
    let session = Session::build(corpus, vocab, embedder, projection, cfg)?;
    let manifest = store::save_session(dir, &session)?;
    print_json(&manifest)
}

fn write_responses(responses: &[QueryResponse], format: RunFormat, tag: &str) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    for r in responses {
        for rec in &r.results {
            match format {
                RunFormat::Jsonl => {
                    serde_json::to_writer(&mut out, rec).expect("records serialize")
                }
                RunFormat::Trec => write!(
                    out,
                    "{} Q0 {} {} {} {}",
                    rec.bug_id, rec.doc_id, rec.rank, rec.score, tag
                )
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))?,
            }
            writeln!(out).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
        }
    }
    out.flush()
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn query(args: &QueryArgs) -> Result<()> {
    let source = Source::open(&args.target)?;
    let params = args.params.params();
    let responses = if let Some(text) = &args.text {
        vec![source.query(&QueryRequest {
            bug_id: args.id.clone(),
            text: Some(text.clone()),
            params,
        })?]
    } else if let Some(path) = &args.bug_file {
        let bugs = corpus::read_bugs(path)?;
        bugs.iter()
            .map(|b| {
                source.query(&QueryRequest {
                    bug_id: Some(b.bug_id.clone()),
                    text: Some(b.query_text()),
                    params: params.clone(),
                })
            })
            .collect::<Result<_>>()?
    } else {
        source
            .query_batch(&BatchQueryRequest {
                bug_ids: (!args.bug_ids.is_empty()).then(|| args.bug_ids.clone()),
                params,
            })?
            .results
    };
    write_responses(&responses, args.format, &args.tag)
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let bug_ids = (!args.bug_ids.is_empty()).then(|| args.bug_ids.clone());
    let Some(runs) = &args.runs else {
        if args.links.is_some() {
            return Err(CliError::usage(
                "--links applies to --runs; sessions score against their own links",
            ));
        }
        let source = Source::open(&args.target)?;
        let report = source.evaluate(&EvaluateRequest {
            bug_ids,
            params: args.params.params(),
        })?;
        return print_json(&report.report);
    };
    let results = retrieve::read_run(&read_text(runs)?)?;
    let session = match &args.target.session.session {
        Some(_) => Some(Source::open_local(&args.target)?),
        None => None,
    };
    let bugs = bug_ids.map(|ids| ids.into_iter().collect());
    let report = match (&args.links, session) {
        (None, Some(s)) => pipeline::evaluate(&results, &s.corpus, bugs.as_ref())?,
        (Some(links), session) => {
            let mut corpus = match session {
                Some(s) => s.corpus.clone(),
                None => Corpus::default(),
            };
            corpus.links = corpus::read_links(links)?;
            if corpus.bugs.is_empty() {
                // without reports there is nothing to categorize
                let mut qrels = corpus::qrels_from_links(&corpus.links);
                if let Some(keep) = &bugs {
                    qrels.retain(|b, _| keep.contains(b));
                }
                let aggregated: Vec<_> = results
                    .iter()
                    .map(|r| retrieve::aggregate_to_changeset(r, Aggregation::Max))
                    .collect();
                fbl_core::eval::report(&aggregated, &qrels, &Default::default())?
            } else {
                pipeline::evaluate(&results, &corpus, bugs.as_ref())?
            }
        }
        (None, None) => return Err(CliError::usage("scoring runs needs --links or a session")),
    };
    print_json(&report)
}

async fn serve(dir: &Path, addr: &str) -> Result<()> {
    let session = std::sync::Arc::new(store::load_session(dir, &store::Expectations::default())?);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| CliError {
            kind: ErrorKind::Usage,
            message: format!("cannot bind {addr}: {e}"),
        })?;
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    fbl_server::serve(listener, session, shutdown)
        .await
        .map_err(|e| CliError {
            kind: ErrorKind::Internal,
            message: format!("server failed: {e}"),
        })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest {
            changesets,
            bugs,
            links,
            out,
        } => ingest(&changesets, &bugs, &links, &out),
        Command::Vocab {
            corpus,
            min_count,
            out,
        } => vocab(&corpus, min_count, out.as_deref()),
        Command::TrainProjection(args) => train(&args),
        Command::Index(args) => index(&args),
        Command::Query(args) => query(&args),
        Command::Evaluate(args) => evaluate(&args),
        Command::Bench(args) => bench::run(&args),
        Command::Serve { session, addr } => {
            let dir = session.dir()?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env()
                        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
                )
                .with_writer(std::io::stderr)
                .init();
            source::runtime()?.block_on(serve(dir, &addr))
        }
    }
}

fn report(kind: ErrorKind, message: String) -> ExitCode {
    let body = ErrorBody {
        error: message,
        kind,
    };
    eprintln!(
        "{}",
        serde_json::to_string(&body).expect("error bodies serialize")
    );
    ExitCode::from(kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            return report(
                ErrorKind::Usage,
                e.render().to_string().trim_end().to_string(),
            )
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e.kind, e.message),
    }
}
