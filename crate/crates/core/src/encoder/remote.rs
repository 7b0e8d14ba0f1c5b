//! Client for an external scorer service.
//!
//! Wire protocol (JSON over HTTP POST):
//! request `{"model_hint", "task": "embed"|"score", "items": [{"query", "document"}]}`,
//! response `{"model_version", "results": [{"embedding": [..]} | {"logit": x}]}`.
//! Key prediction posts `{"model_hint", "task": "keys", "schema": {..}}` to the key endpoint
//! and expects `{"model_version", "primary_keys", "foreign_keys"}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::context::{render_context, ColumnContext};
use super::provider::EmbeddingProvider;
use super::ProviderError;
use crate::graph::{parse_key_prediction, KeyPrediction};
use crate::schema::{serialize_schema, DatabaseSchema};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub key_endpoint: Option<String>,
    pub model_hint: String,
    pub dim: usize,
    pub max_batch: usize,
    pub max_in_flight: usize,
    pub timeout_ms: u64,
    pub retries: u32,
    /// Environment variable holding the bearer token, if any.
    pub auth_env: Option<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            key_endpoint: None,
            model_hint: String::new(),
            dim: 1024,
            max_batch: 32,
            max_in_flight: 4,
            timeout_ms: 30_000,
            retries: 2,
            auth_env: Some("SCHEMAFILTER_AUTH_TOKEN".into()),
        }
    }
}

#[derive(Serialize)]
struct Item<'a> {
    query: &'a str,
    document: String,
}

#[derive(Serialize)]
struct Request<'a> {
    model_hint: &'a str,
    task: &'a str,
    items: Vec<Item<'a>>,
}

#[derive(Deserialize)]
struct Response {
    model_version: String,
    results: Vec<ResultItem>,
}

#[derive(Deserialize)]
struct ResultItem {
    embedding: Option<Vec<f32>>,
    logit: Option<f64>,
}

pub struct RemoteClient {
    config: RemoteConfig,
    http: reqwest::blocking::Client,
    token: Option<String>,
    pinned: Mutex<Option<String>>,
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        if config.endpoint.is_empty() {
            return Err(ProviderError::Unavailable("no endpoint configured".into()));
        }
        if config.max_batch == 0 || config.max_in_flight == 0 {
            return Err(ProviderError::Unavailable("max_batch and max_in_flight must be positive".into()));
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let token = config.auth_env.as_deref().and_then(|var| std::env::var(var).ok());
        Ok(Self { config, http, token, pinned: Mutex::new(None) })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// The model version seen on the first response, if any.
    pub fn pinned_version(&self) -> Option<String> {
        self.pinned.lock().expect("lock poisoned").clone()
    }

    fn pin(&self, version: &str) -> Result<(), ProviderError> {
        let mut pinned = self.pinned.lock().expect("lock poisoned");
        match pinned.as_deref() {
            None => {
                *pinned = Some(version.to_string());
                Ok(())
            }
            Some(p) if p == version => Ok(()),
            Some(p) => Err(ProviderError::VersionChanged { pinned: p.to_string(), found: version.to_string() }),
        }
    }

    fn post_json(&self, url: &str, body: &serde_json::Value) -> Result<String, ProviderError> {
        let mut last = ProviderError::Unavailable("no attempt made".into());
        for attempt in 0..=self.config.retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(50 << attempt.min(6)));
            }
            let mut req = self.http.post(url).json(body);
            if let Some(token) = &self.token {
                req = req.bearer_auth(token);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp.text().map_err(|e| ProviderError::Transport(e.to_string()));
                    }
                    if status.as_u16() == 413 || status.as_u16() == 429 {
                        return Err(ProviderError::OverCapacity);
                    }
                    last = ProviderError::Http(status.as_u16());
                    if status.is_client_error() {
                        return Err(last);
                    }
                }
                Err(e) if e.is_timeout() => last = ProviderError::Timeout,
                Err(e) => last = ProviderError::Transport(e.to_string()),
            }
            log::debug!("request to {url} failed (attempt {}): {last}", attempt + 1);
        }
        Err(last)
    }

    fn call(&self, task: &str, items: &[(&str, &ColumnContext)]) -> Result<Vec<ResultItem>, ProviderError> {
        let req = Request {
            model_hint: &self.config.model_hint,
            task,
            items: items.iter().map(|(q, c)| Item { query: q, document: render_context(c) }).collect(),
        };
        let body = serde_json::to_value(&req).expect("request serializes");
        let text = self.post_json(&self.config.endpoint, &body)?;
        let resp: Response = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        self.pin(&resp.model_version)?;
        if resp.results.len() != items.len() {
            return Err(ProviderError::Malformed(format!(
                "{} results for {} items",
                resp.results.len(),
                items.len()
            )));
        }
        Ok(resp.results)
    }

    /// Splits into `max_batch` chunks, keeps at most `max_in_flight` requests open, reassembles in order.
    fn call_all<T: Send>(
        &self,
        task: &str,
        items: &[(&str, &ColumnContext)],
        pick: impl Fn(ResultItem) -> Result<T, ProviderError> + Sync,
    ) -> Result<Vec<T>, ProviderError> {
        if items.is_empty() {
            return Ok(Vec::new());
        }
        let chunks: Vec<&[(&str, &ColumnContext)]> = items.chunks(self.config.max_batch).collect();
        let slots: Vec<Mutex<Option<Result<Vec<T>, ProviderError>>>> = chunks.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.config.max_in_flight.min(chunks.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= chunks.len() {
                        break;
                    }
                    let res = self.call(task, chunks[i]).and_then(|r| r.into_iter().map(&pick).collect());
                    *slots[i].lock().expect("lock poisoned") = Some(res);
                });
            }
        });
        let mut out = Vec::with_capacity(items.len());
        for slot in slots {
            out.extend(slot.into_inner().expect("lock poisoned").expect("every chunk ran")?);
        }
        Ok(out)
    }

    pub fn remote_embed(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let dim = self.config.dim;
        self.call_all("embed", items, |r| {
            let v = r.embedding.ok_or_else(|| ProviderError::Malformed("result without embedding".into()))?;
            if v.len() != dim {
                return Err(ProviderError::DimensionMismatch { expected: dim, found: v.len() });
            }
            Ok(v)
        })
    }

    pub fn remote_score(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<f64>, ProviderError> {
        self.call_all("score", items, |r| {
            let l = r.logit.ok_or_else(|| ProviderError::Malformed("result without logit".into()))?;
            if l.is_finite() {
                Ok(l)
            } else {
                Err(ProviderError::Malformed("non-finite logit".into()))
            }
        })
    }

    /// Asks the key endpoint for primary/foreign keys of `schema`.
    pub fn predict_keys(&self, schema: &DatabaseSchema) -> Result<KeyPrediction, ProviderError> {
        let url = self.config.key_endpoint.as_deref().unwrap_or(&self.config.endpoint);
        let schema_doc: serde_json::Value =
            serde_json::from_str(&serialize_schema(schema)).expect("serialized schema is JSON");
        let body = serde_json::json!({"model_hint": self.config.model_hint, "task": "keys", "schema": schema_doc});
        let text = self.post_json(url, &body)?;
        parse_key_prediction(&text).map_err(|e| ProviderError::Malformed(e.to_string()))
    }
}

/// `EmbeddingProvider` backed by the remote service.
pub struct RemoteProvider {
    client: RemoteClient,
}

impl RemoteProvider {
    pub fn new(config: RemoteConfig) -> Result<Self, ProviderError> {
        Ok(Self { client: RemoteClient::new(config)? })
    }

    pub fn client(&self) -> &RemoteClient {
        &self.client
    }
}

impl EmbeddingProvider for RemoteProvider {
    fn dim(&self) -> usize {
        self.client.config.dim
    }

    fn version(&self) -> String {
        self.client.pinned_version().unwrap_or_else(|| format!("remote:{}", self.client.config.model_hint))
    }

    fn embed_batch(&self, items: &[(&str, &ColumnContext)]) -> Result<Vec<Vec<f32>>, ProviderError> {
        self.client.remote_embed(items)
    }
}
