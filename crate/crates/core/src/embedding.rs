//! Embedding vectors, cosine similarity and embedding providers.
//!
//! Two providers exist: a remote endpoint speaking the common `/v1/embeddings`
//! protocol (behind the `remote` feature) and [`HashedNgramEmbedder`], a
//! deterministic offline embedder built from signed hashing of character
//! trigrams. The hashed embedder needs no model weights and still gives
//! lexically similar texts similar vectors, which is enough for tests, demos
//! and token-level BERTScore-style alignment.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chunking::tokenize;
use crate::error::{Error, Result};

pub const DEFAULT_HASHED_DIM: usize = 256;

/// Fixed seed of the hashed embedder; part of its output contract.
pub const HASH_SEED: u64 = 0x5241_4745_765f_6e67;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("embedding vector has zero dimensions"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding component {i} is not finite")));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Scale to unit length. A zero vector is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let norm = self.norm();
        if norm > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= norm);
        }
        self
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

pub(crate) fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::invalid("cosine of a zero vector is undefined"));
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// 64-bit FNV-1a, with the seed folded into the offset basis.
pub fn fnv1a64(bytes: &[u8], seed: u64) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub trait Embedder: Send + Sync {
    fn model_name(&self) -> &str;

    /// One vector per input text, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>>;

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| Error::invalid("provider returned no embedding"))
    }

    /// One vector per whitespace token of `text`, in token order.
    fn embed_tokens(&self, text: &str) -> Result<Vec<EmbeddingVector>> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::invalid("cannot embed tokens of empty text"));
        }
        self.embed_batch(&tokens)
    }
}

/// Signed feature hashing of lowercased character trigrams, L2-normalized.
///
/// The text is padded with one space on each side so that every non-empty
/// input has at least one trigram and word boundaries contribute features.
#[derive(Debug, Clone)]
pub struct HashedNgramEmbedder {
    dim: usize,
    model_name: String,
}

impl HashedNgramEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        Self::with_name(dim, format!("hashed-3gram-{dim}"))
    }

    pub fn with_name(dim: usize, model_name: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(HashedNgramEmbedder { dim, model_name: model_name.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        if text.is_empty() {
            return Err(Error::invalid("cannot embed empty text"));
        }
        let padded: Vec<char> = std::iter::once(' ')
            .chain(text.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once(' '))
            .collect();
        let mut values = vec![0.0f64; self.dim];
        let mut buf = String::with_capacity(12);
        for gram in padded.windows(3) {
            buf.clear();
            buf.extend(gram);
            self.add_feature(&mut values, buf.as_bytes());
        }
        if values.iter().all(|&v| v == 0.0) {
            // every trigram cancelled out; fall back to a whole-text feature
            values[self.bucket(text.as_bytes()).0] = 1.0;
        }
        EmbeddingVector::new(values).map(EmbeddingVector::normalized)
    }

    fn bucket(&self, feature: &[u8]) -> (usize, f64) {
        let h = fnv1a64(feature, HASH_SEED);
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        ((h % self.dim as u64) as usize, sign)
    }

    fn add_feature(&self, values: &mut [f64], feature: &[u8]) {
        let (idx, sign) = self.bucket(feature);
        values[idx] += sign;
    }
}

impl Embedder for HashedNgramEmbedder {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    RemoteEndpoint,
    HashedNgram,
}

impl FromStr for ProviderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "remote" | "remote_endpoint" => Ok(ProviderKind::RemoteEndpoint),
            "hashed" | "hashed_ngram" => Ok(ProviderKind::HashedNgram),
            other => Err(Error::invalid(format!("unknown embedding provider {other:?}"))),
        }
    }
}

impl fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProviderKind::RemoteEndpoint => "remote",
            ProviderKind::HashedNgram => "hashed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Model identifier; also the EMB level code in experiment mnemonics.
    pub model_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_url: Option<String>,
    /// Output dimension. Ignored for remote endpoints, which report their own.
    pub dim: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
}

fn default_max_in_flight() -> usize {
    4
}

impl ProviderConfig {
    pub fn hashed(dim: usize) -> Self {
        ProviderConfig {
            kind: ProviderKind::HashedNgram,
            model_name: format!("hashed-3gram-{dim}"),
            endpoint_url: None,
            dim,
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn remote(model_name: impl Into<String>, endpoint_url: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::RemoteEndpoint,
            model_name: model_name.into(),
            endpoint_url: Some(endpoint_url.into()),
            dim: 0,
            max_in_flight: default_max_in_flight(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ProviderKind::RemoteEndpoint if self.endpoint_url.as_deref().unwrap_or("").is_empty() => {
                Err(Error::invalid("remote embedding provider requires an endpoint url"))
            }
            ProviderKind::HashedNgram if self.dim == 0 => {
                Err(Error::invalid("embedding dimension must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Stable identity for caching indexes built with this provider.
    pub fn cache_key(&self) -> String {
        match self.kind {
            ProviderKind::HashedNgram => format!("hashed:{}", self.dim),
            ProviderKind::RemoteEndpoint => format!(
                "remote:{}@{}",
                self.model_name,
                self.endpoint_url.as_deref().unwrap_or("")
            ),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Embedder>> {
        self.validate()?;
        match self.kind {
            ProviderKind::HashedNgram => Ok(Box::new(HashedNgramEmbedder::with_name(
                self.dim,
                self.model_name.clone(),
            )?)),
            #[cfg(feature = "remote")]
            ProviderKind::RemoteEndpoint => Ok(Box::new(crate::remote::RemoteEmbedder::new(self)?)),
            #[cfg(not(feature = "remote"))]
            ProviderKind::RemoteEndpoint => Err(Error::invalid(
                "remote embedding providers need the `remote` feature",
            )),
        }
    }
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::hashed(DEFAULT_HASHED_DIM)
    }
}
