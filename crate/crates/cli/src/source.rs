//! A session either loaded in-process or reached over HTTP.

use fbl_client::Client;
use fbl_core::api::{
    self, BatchQueryRequest, BatchQueryResponse, EvaluateRequest, EvaluateResponse, QueryRequest,
    QueryResponse,
};
use fbl_core::config::Config;
use fbl_core::embed::LinearProjection;
use fbl_core::pipeline::{LoadedEmbedder, Session};
use fbl_core::store::{self, Expectations, Manifest};
use fbl_core::ErrorKind;

use crate::{read_projection, CliError, Result, TargetArgs};

enum Target {
    Local(Session),
    Remote {
        client: Client,
        rt: tokio::runtime::Runtime,
    },
}

pub(crate) struct Source(Target);

pub(crate) fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .map_err(|e| CliError {
            kind: ErrorKind::Internal,
            message: format!("cannot start runtime: {e}"),
        })
}

/// Expectations from the `--granularity`/`--projection`/... flags; the
/// embedder spec needs the manifest's dimension to be resolved.
fn expectations(args: &TargetArgs, manifest: &Manifest) -> Result<Expectations> {
    let mut exp = Expectations {
        granularity: args.granularity,
        strategy: args.strategy,
        partitions: args.partitions,
        seed: args.seed,
        ..Expectations::default()
    };
    if let Some(source) = &args.embedder {
        let cfg = Config {
            seed: args.seed.unwrap_or(manifest.index.seed),
            d_in: manifest.embedder.d_in(),
            ..manifest.config()
        };
        exp.embedder = Some(LoadedEmbedder::from_source(source, &cfg)?.spec());
    }
    if let Some(p) = &args.projection {
        let projection: LinearProjection = read_projection(p)?;
        exp.projection_hash = Some(projection.content_hash());
    }
    Ok(exp)
}

impl Source {
    pub(crate) fn open_local(args: &TargetArgs) -> Result<Session> {
        let dir = args.session.dir()?;
        let manifest = store::read_manifest(dir)?;
        let exp = expectations(args, &manifest)?;
        Ok(store::load_session(dir, &exp)?)
    }

    pub(crate) fn open(args: &TargetArgs) -> Result<Self> {
        let Some(url) = &args.server else {
            return Ok(Self(Target::Local(Self::open_local(args)?)));
        };
        let client = Client::new(url.clone());
        let rt = runtime()?;
        let manifest = rt.block_on(client.manifest())?;
        manifest.check(&expectations(args, &manifest)?)?;
        Ok(Self(Target::Remote { client, rt }))
    }

    pub(crate) fn query(&self, req: &QueryRequest) -> Result<QueryResponse> {
        match &self.0 {
            Target::Local(s) => Ok(api::query(s, req)?),
            Target::Remote { client, rt } => Ok(rt.block_on(client.query(req))?),
        }
    }

    pub(crate) fn query_batch(&self, req: &BatchQueryRequest) -> Result<BatchQueryResponse> {
        match &self.0 {
            Target::Local(s) => Ok(api::query_batch(s, req)?),
            Target::Remote { client, rt } => Ok(rt.block_on(client.query_batch(req))?),
        }
    }

    pub(crate) fn evaluate(&self, req: &EvaluateRequest) -> Result<EvaluateResponse> {
        match &self.0 {
            Target::Local(s) => Ok(api::evaluate(s, req)?),
            Target::Remote { client, rt } => Ok(rt.block_on(client.evaluate(req))?),
        }
    }
}
