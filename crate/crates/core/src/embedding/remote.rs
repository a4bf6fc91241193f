//! Client for OpenAI-compatible embedding services.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

use super::{EmbeddingCache, EmbeddingError, EmbeddingVector, EncoderDescriptor, EncoderKind, Result, TextEncoder};

/// Environment variable holding the bearer token for the embeddings endpoint.
pub const EMBED_KEY_ENV: &str = "INTENT_ROUTER_EMBED_KEY";

const DEFAULT_BATCH_SIZE: usize = 64;

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
    #[serde(default)]
    index: Option<usize>,
}

pub struct RemoteEncoder {
    desc: EncoderDescriptor,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: Client,
    cache: EmbeddingCache,
    batch_size: usize,
    requests: AtomicUsize,
}

impl std::fmt::Debug for RemoteEncoder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteEncoder")
            .field("name", &self.desc.name)
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteEncoder {
    /// Builds a client; the API key is read from `INTENT_ROUTER_EMBED_KEY`.
    pub fn new(desc: EncoderDescriptor) -> Result<Self> {
        let key = std::env::var(EMBED_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(desc, key)
    }

    pub fn with_key(desc: EncoderDescriptor, api_key: Option<String>) -> Result<Self> {
        desc.validate()?;
        if desc.kind != EncoderKind::Remote {
            return Err(EmbeddingError::InvalidDescriptor("expected a remote encoder".into()));
        }
        let endpoint = desc.endpoint.clone().unwrap_or_default();
        let model = desc.model.clone().unwrap_or_default();
        let client = Client::builder()
            .timeout(Duration::from_millis(desc.timeout_ms))
            .build()
            .map_err(|e| EmbeddingError::InvalidDescriptor(e.to_string()))?;
        let cache = match &desc.cache_path {
            Some(path) => EmbeddingCache::persistent(path)?,
            None => EmbeddingCache::in_memory(),
        };
        Ok(Self {
            endpoint: endpoint.trim_end_matches('/').to_string(),
            model,
            api_key,
            client,
            cache,
            batch_size: DEFAULT_BATCH_SIZE,
            requests: AtomicUsize::new(0),
            desc,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size.max(1);
        self
    }

    /// Number of HTTP requests issued so far.
    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }

    fn request(&self, texts: &[String], range: Range<usize>) -> Result<Vec<EmbeddingVector>> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let url = format!("{}/v1/embeddings", self.endpoint);
        let mut req = self.client.post(&url).json(&EmbeddingRequest {
            model: &self.model,
            input: texts,
        });
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbeddingError::Transport {
            range: range.clone(),
            message: crate::error_chain(&e),
        })?;
        let status = resp.status();
        if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
            return Err(EmbeddingError::Auth {
                range,
                message: format!("HTTP {status}"),
            });
        }
        if !status.is_success() {
            return Err(EmbeddingError::Transport {
                range,
                message: format!("HTTP {status}"),
            });
        }
        let body: EmbeddingResponse = resp.json().map_err(|e| EmbeddingError::Protocol {
            range: range.clone(),
            message: format!("malformed response: {e}"),
        })?;
        let protocol = |message: String| EmbeddingError::Protocol {
            range: range.clone(),
            message,
        };
        if body.data.len() != texts.len() {
            return Err(protocol(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                body.data.len()
            )));
        }
        let mut data = body.data;
        if data.iter().all(|d| d.index.is_some()) {
            data.sort_by_key(|d| d.index);
            if data.iter().enumerate().any(|(i, d)| d.index != Some(i)) {
                return Err(protocol("response indices do not cover the batch".into()));
            }
        }
        let dim = data[0].embedding.len();
        if let Some(expected) = self.desc.dim {
            if dim != expected {
                return Err(protocol(format!("expected dimension {expected}, got {dim}")));
            }
        }
        data.into_iter()
            .map(|d| {
                if d.embedding.len() != dim {
                    return Err(protocol(format!(
                        "dimension mismatch within batch: {} vs {dim}",
                        d.embedding.len()
                    )));
                }
                EmbeddingVector::from_raw(d.embedding).map_err(|e| protocol(e.to_string()))
            })
            .collect()
    }
}

impl TextEncoder for RemoteEncoder {
    fn descriptor(&self) -> &EncoderDescriptor {
        &self.desc
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        let prepared: Vec<String> = texts.iter().map(|t| self.desc.prepare(t)).collect();
        if prepared.iter().any(|t| t.is_empty()) {
            return Err(EmbeddingError::EmptyInput);
        }
        let name = self.desc.name.as_str();

        // Unique cache misses, in first-occurrence order, with their input positions.
        let mut misses: Vec<(String, usize)> = Vec::new();
        let mut seen: HashMap<&str, ()> = HashMap::new();
        for (i, text) in prepared.iter().enumerate() {
            if self.cache.get(name, &self.model, text).is_none() && seen.insert(text, ()).is_none() {
                misses.push((text.clone(), i));
            }
        }

        for chunk in misses.chunks(self.batch_size) {
            let batch: Vec<String> = chunk.iter().map(|(t, _)| t.clone()).collect();
            let first = chunk.first().map_or(0, |c| c.1);
            let last = chunk.last().map_or(0, |c| c.1);
            let vectors = self.request(&batch, first..last + 1)?;
            self.cache
                .insert_many(name, &self.model, batch.into_iter().zip(vectors))?;
        }

        let out: Vec<EmbeddingVector> = prepared
            .iter()
            .map(|t| self.cache.get(name, &self.model, t))
            .collect::<Option<_>>()
            .ok_or_else(|| EmbeddingError::Protocol {
                range: 0..texts.len(),
                message: "cache lost an embedding".into(),
            })?;
        if out.iter().any(|v| v.dim() != out[0].dim()) {
            return Err(EmbeddingError::Protocol {
                range: 0..texts.len(),
                message: "cached embeddings disagree on dimension".into(),
            });
        }
        Ok(out)
    }
}
