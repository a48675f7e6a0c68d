//! Async client for the query service.

use fbl_core::api::{
    BatchQueryRequest, BatchQueryResponse, ErrorBody, EvaluateRequest, EvaluateResponse, Health,
    QueryRequest, QueryResponse, TokenizeRequest, TokenizeResponse,
};
use fbl_core::store::Manifest;
use fbl_core::ErrorKind;
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request to {url} failed: {source}")]
    Transport {
        url: String,
        #[source]
        source: reqwest::Error,
    },
    #[error("server answered {status}: {}", body.error)]
    Api { status: u16, body: ErrorBody },
}

impl ClientError {
    /// Server-side errors keep their kind; an unreachable or misbehaving
    /// server counts as bad input.
    pub fn kind(&self) -> ErrorKind {
        match self {
            ClientError::Transport { .. } => ErrorKind::Data,
            ClientError::Api { body, .. } => body.kind,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:7878`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn finish<T: DeserializeOwned>(
        &self,
        url: String,
        sent: reqwest::Result<reqwest::Response>,
    ) -> Result<T, ClientError> {
        let transport = |source| ClientError::Transport {
            url: url.clone(),
            source,
        };
        let resp = sent.map_err(transport)?;
        let status = resp.status();
        if status.is_success() {
            return resp.json().await.map_err(transport);
        }
        let text = resp.text().await.map_err(transport)?;
        let body = serde_json::from_str(&text).unwrap_or(ErrorBody {
            error: text,
            kind: ErrorKind::Internal,
        });
        Err(ClientError::Api {
            status: status.as_u16(),
            body,
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        let sent = self.http.get(&url).send().await;
        self.finish(url, sent).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        let url = format!("{}{path}", self.base);
        let sent = self.http.post(&url).json(body).send().await;
        self.finish(url, sent).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn manifest(&self) -> Result<Manifest, ClientError> {
        self.get("/v1/manifest").await
    }

    pub async fn query(&self, req: &QueryRequest) -> Result<QueryResponse, ClientError> {
        self.post("/v1/query", req).await
    }

    pub async fn query_batch(
        &self,
        req: &BatchQueryRequest,
    ) -> Result<BatchQueryResponse, ClientError> {
        self.post("/v1/query/batch", req).await
    }

    pub async fn tokenize(&self, text: &str) -> Result<TokenizeResponse, ClientError> {
        self.post(
            "/v1/tokenize",
            &TokenizeRequest {
                text: text.to_string(),
            },
        )
        .await
    }

    pub async fn evaluate(&self, req: &EvaluateRequest) -> Result<EvaluateResponse, ClientError> {
        self.post("/v1/evaluate", req).await
    }
}
