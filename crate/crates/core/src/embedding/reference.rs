//! Offline reference encoder: signed feature hashing over word unigrams and
//! '#'-padded character trigrams, FNV-1a 64-bit.
//!
//! The output is bit-exact across platforms: features are hashed in a fixed
//! order, accumulated as small integers, and normalized once.

use super::{EmbeddingError, EmbeddingVector, EncoderDescriptor, Result, TextEncoder, MIN_REFERENCE_DIM};

const FNV_OFFSET: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |hash, &b| (hash ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// Lowercases and maps every character outside `[a-z0-9]` to a space.
pub fn normalize_for_features(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .map(|c| {
            if c.is_ascii_lowercase() || c.is_ascii_digit() {
                c
            } else {
                ' '
            }
        })
        .collect()
}

/// Features in hashing order: for each word, the word itself followed by its
/// padded trigrams.
pub fn reference_features(text: &str) -> Vec<String> {
    let normalized = normalize_for_features(text);
    let mut features = Vec::new();
    for word in normalized.split_whitespace() {
        features.push(word.to_string());
        let padded: Vec<char> = std::iter::once('#')
            .chain(word.chars())
            .chain(std::iter::once('#'))
            .collect();
        for window in padded.windows(3) {
            features.push(window.iter().collect());
        }
    }
    features
}

pub fn reference_encode(text: &str, dim: usize) -> Result<EmbeddingVector> {
    if dim < MIN_REFERENCE_DIM {
        return Err(EmbeddingError::InvalidDim(dim));
    }
    let features = reference_features(text);
    if features.is_empty() {
        return Err(EmbeddingError::EmptyInput);
    }
    let mut acc = vec![0i64; dim];
    for feature in &features {
        let hash = fnv1a64(feature.as_bytes());
        let bucket = (hash % dim as u64) as usize;
        acc[bucket] += if hash >> 63 == 0 { 1 } else { -1 };
    }
    EmbeddingVector::from_raw(acc.into_iter().map(|v| v as f64).collect())
}

#[derive(Debug, Clone)]
pub struct ReferenceEncoder {
    desc: EncoderDescriptor,
    dim: usize,
}

impl ReferenceEncoder {
    pub fn new(desc: EncoderDescriptor) -> Result<Self> {
        desc.validate()?;
        let dim = desc.dim.ok_or(EmbeddingError::InvalidDim(0))?;
        Ok(Self { desc, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl TextEncoder for ReferenceEncoder {
    fn descriptor(&self) -> &EncoderDescriptor {
        &self.desc
    }

    fn encode_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        texts
            .iter()
            .map(|t| reference_encode(&self.desc.prepare(t), self.dim))
            .collect()
    }
}
