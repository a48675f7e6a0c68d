use std::time::Instant;

use clap::Args;

use fbl_core::api::Candidates;
use fbl_core::index::IvfPqIndex;
use fbl_core::retrieve::{rank_exact, rank_two_stage};
use fbl_core::store::{self, Expectations};

use crate::{CliError, Result, SessionArg};

#[derive(Args)]
pub(crate) struct BenchArgs {
    #[command(flatten)]
    session: SessionArg,
    /// Document counts to subsample; `all` is the whole session.
    #[arg(long, value_delimiter = ',', default_value = "all")]
    sizes: Vec<String>,
    /// Bug reports timed per size, taken in corpus order.
    #[arg(long, default_value_t = 20)]
    queries: usize,
    #[arg(long)]
    nprobe: Option<usize>,
    #[arg(long)]
    candidates: Option<Candidates>,
    #[arg(long, default_value_t = 10)]
    topk: usize,
}

fn parse_size(s: &str, total: usize) -> Result<usize> {
    if s == "all" {
        return Ok(total);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n.min(total)),
        _ => Err(CliError::usage(format!(
            "invalid size {s:?} (expected a positive count or all)"
        ))),
    }
}

/// Evenly spaced positions, so every size sees the same spread of changesets.
fn spread(n: usize, total: usize) -> Vec<usize> {
    (0..n).map(|i| i * total / n).collect()
}

pub(crate) fn run(args: &BenchArgs) -> Result<()> {
    let session = store::load_session(args.session.dir()?, &Expectations::default())?;
    let total = session.docs.len();
    let sizes = args
        .sizes
        .iter()
        .map(|s| parse_size(s, total))
        .collect::<Result<Vec<_>>>()?;
    if args.queries == 0 || args.topk == 0 {
        return Err(CliError::usage("--queries and --topk must be positive"));
    }
    let nprobe = args.nprobe.unwrap_or(session.config.nprobe);
    let candidates = args
        .candidates
        .map_or(session.config.candidates, Candidates::budget);
    let queries = session
        .corpus
        .bugs
        .iter()
        .take(args.queries)
        .map(|b| session.embed_query(&b.query_text()))
        .collect::<Result<Vec<_>, _>>()?;
    if queries.is_empty() {
        return Err(CliError::usage("the session has no bug reports to time"));
    }

    println!("documents,embeddings,queries,exact_ms,two_stage_ms,ratio");
    for n in sizes {
        let docs = session.docs.subset(&spread(n, total));
        let index = IvfPqIndex::build(&docs, &session.config.index_params())?;
        let t = Instant::now();
        for q in &queries {
            rank_exact("bench", q, &docs)?;
        }
        let exact = t.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
        let t = Instant::now();
        for q in &queries {
            rank_two_stage("bench", q, &index, &docs, candidates, nprobe, args.topk)?;
        }
        let two_stage = t.elapsed().as_secs_f64() * 1e3 / queries.len() as f64;
        println!(
            "{},{},{},{exact:.3},{two_stage:.3},{:.4}",
            docs.len(),
            docs.total_rows(),
            queries.len(),
            two_stage / exact
        );
    }
    Ok(())
}
