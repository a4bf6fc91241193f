//! Text embeddings behind a uniform encoder contract.
//!
//! Two encoders are provided: a deterministic hashed n-gram encoder that runs
//! fully offline, and a client for OpenAI-compatible `/v1/embeddings`
//! services. Every vector leaving this module is L2-normalized, so cosine
//! similarity reduces to a dot product.

mod cache;
mod reference;
mod remote;

use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::EmbeddingCache;
pub use reference::{fnv1a64, normalize_for_features, reference_encode, reference_features, ReferenceEncoder};
pub use remote::{RemoteEncoder, EMBED_KEY_ENV};

/// Smallest dimension accepted by the reference encoder.
pub const MIN_REFERENCE_DIM: usize = 8;

/// Word limit applied to MiniLM-style encoders when none is configured.
pub const MINILM_WORD_LIMIT: usize = 256;

const DEFAULT_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("input has no features after normalization")]
    EmptyInput,

    #[error("invalid embedding dimension {0} (reference encoder needs at least {MIN_REFERENCE_DIM})")]
    InvalidDim(usize),

    #[error("embedding is the zero vector and cannot be normalized")]
    ZeroVector,

    #[error("embedding contains non-finite values")]
    NonFinite,

    #[error("invalid encoder descriptor: {0}")]
    InvalidDescriptor(String),

    #[error("transport error for batch {range:?}: {message}")]
    Transport { range: Range<usize>, message: String },

    #[error("protocol error for batch {range:?}: {message}")]
    Protocol { range: Range<usize>, message: String },

    #[error("credentials rejected for batch {range:?}: {message}")]
    Auth { range: Range<usize>, message: String },

    #[error("embedding cache: {0}")]
    Cache(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EmbeddingError>;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Normalizes `raw` to unit length. Zero and non-finite inputs are rejected.
    pub fn from_raw(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(EmbeddingError::ZeroVector);
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EmbeddingError::ZeroVector);
        }
        Ok(Self {
            values: raw.into_iter().map(|v| v / norm).collect(),
        })
    }

    /// Keeps already-normalized values as-is so that persisted vectors
    /// round-trip bitwise; falls back to `from_raw` otherwise.
    pub(crate) fn from_stored(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.iter().all(|v| v.is_finite()) && (norm - 1.0).abs() < 1e-9 {
            Ok(Self { values })
        } else {
            Self::from_raw(values)
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity. Callers check dimensions first.
    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Reference,
    Remote,
}

/// Configuration for an encoder. Serialized as part of route-set and
/// experiment documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderDescriptor {
    pub kind: EncoderKind,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// On-disk cache file for remote encoders. Unset keeps the cache in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_path: Option<String>,
}

fn default_timeout_ms() -> u64 {
    DEFAULT_TIMEOUT_MS
}

impl EncoderDescriptor {
    pub fn reference(name: impl Into<String>, dim: usize) -> Self {
        Self {
            kind: EncoderKind::Reference,
            name: name.into(),
            dim: Some(dim),
            word_limit: None,
            endpoint: None,
            model: None,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            cache_path: None,
        }
    }

    pub fn remote(name: impl Into<String>, endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            kind: EncoderKind::Remote,
            name: name.into(),
            dim: None,
            word_limit: None,
            endpoint: Some(endpoint.into()),
            model: Some(model.into()),
            timeout_ms: DEFAULT_TIMEOUT_MS,
            cache_path: None,
        }
    }

    pub fn with_word_limit(mut self, limit: usize) -> Self {
        self.word_limit = Some(limit);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(EmbeddingError::InvalidDescriptor("encoder name is empty".into()));
        }
        if self.word_limit == Some(0) {
            return Err(EmbeddingError::InvalidDescriptor("word_limit must be positive".into()));
        }
        match self.kind {
            EncoderKind::Reference => match self.dim {
                None => Err(EmbeddingError::InvalidDescriptor(
                    "reference encoder requires dim".into(),
                )),
                Some(d) if d < MIN_REFERENCE_DIM => Err(EmbeddingError::InvalidDim(d)),
                Some(_) => Ok(()),
            },
            EncoderKind::Remote => {
                if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    return Err(EmbeddingError::InvalidDescriptor(
                        "remote encoder requires endpoint".into(),
                    ));
                }
                if self.model.as_deref().is_none_or(|m| m.trim().is_empty()) {
                    return Err(EmbeddingError::InvalidDescriptor(
                        "remote encoder requires model".into(),
                    ));
                }
                if self.dim == Some(0) {
                    return Err(EmbeddingError::InvalidDim(0));
                }
                Ok(())
            }
        }
    }

    /// Configured word limit, falling back to 256 for MiniLM-style encoders.
    pub fn effective_word_limit(&self) -> Option<usize> {
        self.word_limit.or_else(|| {
            let minilm = |s: &str| s.to_ascii_lowercase().contains("minilm");
            (minilm(&self.name) || self.model.as_deref().is_some_and(minilm)).then_some(MINILM_WORD_LIMIT)
        })
    }

    /// Applies the effective word limit to `text`.
    pub fn prepare(&self, text: &str) -> String {
        match self.effective_word_limit() {
            Some(limit) => truncate_words(text, limit),
            None => text.to_string(),
        }
    }
}

/// First `limit` whitespace-delimited words of `text`, joined by single spaces.
pub fn truncate_words(text: &str, limit: usize) -> String {
    text.split_whitespace().take(limit.max(1)).collect::<Vec<_>>().join(" ")
}

/// Uniform encoder contract. Implementations are immutable after construction
/// and return one normalized vector per input, in input order.
pub trait TextEncoder: Send + Sync {
    fn descriptor(&self) -> &EncoderDescriptor;

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;

    fn encode(&self, text: &str) -> Result<EmbeddingVector> {
        let mut out = self.encode_batch(&[text.to_string()])?;
        out.pop().ok_or(EmbeddingError::EmptyInput)
    }
}

/// Constructs the encoder described by `desc`.
pub fn build_encoder(desc: &EncoderDescriptor) -> Result<Arc<dyn TextEncoder>> {
    desc.validate()?;
    Ok(match desc.kind {
        EncoderKind::Reference => Arc::new(ReferenceEncoder::new(desc.clone())?),
        EncoderKind::Remote => Arc::new(RemoteEncoder::new(desc.clone())?),
    })
}
