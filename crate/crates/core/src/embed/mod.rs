//! Embedding providers, a flat cosine index, and retrieval.

mod hash;
mod index;
mod remote;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, ProviderError, Result};
use crate::text;

pub use hash::{hash_embed, hash_features, HashEmbeddingProvider};
pub use index::{build_index, retrieve, RankedEntry, RankedList, SnapshotBinding, VectorIndex};
pub use remote::RemoteEmbeddingProvider;

/// Query prefix of the small code retriever.
pub const SMALL_QUERY_PREFIX: &str = "Represent this query for searching relevant code: ";
/// Query prefix of the large instruction-tuned retriever.
pub const LARGE_QUERY_PREFIX: &str =
    "Instruct: Given a github issue, identify the code that needs to be changed to fix the issue. Query: ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingProviderSpec {
    pub provider_name: String,
    pub dimension: usize,
    pub query_prefix: String,
    #[serde(default)]
    pub document_prefix: String,
    pub max_input_tokens: usize,
    #[serde(default = "default_batch_size")]
    pub max_batch_size: usize,
}

fn default_batch_size() -> usize {
    32
}

impl EmbeddingProviderSpec {
    pub fn new(provider_name: impl Into<String>, dimension: usize) -> Self {
        Self {
            provider_name: provider_name.into(),
            dimension,
            query_prefix: String::new(),
            document_prefix: String::new(),
            max_input_tokens: 8192,
            max_batch_size: default_batch_size(),
        }
    }

    pub fn with_query_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.query_prefix = prefix.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("embedding dimension must be >= 1".into()));
        }
        if self.max_input_tokens == 0 || self.max_batch_size == 0 {
            return Err(Error::Config(
                "max_input_tokens and max_batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Unit-length dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f32>,
}

impl EmbeddingVector {
    /// Scales `values` to unit L2 norm.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        let norm = values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt();
        if !norm.is_finite() {
            return Err(Error::NumericInput("embedding has non-finite entries".into()));
        }
        if norm == 0.0 {
            return Err(Error::DegenerateVector("zero vector cannot be normalized".into()));
        }
        Ok(Self {
            values: values
                .into_iter()
                .map(|v| (f64::from(v) / norm) as f32)
                .collect(),
        })
    }

    /// Wraps values already known to be unit-norm.
    #[cfg(test)]
    pub(crate) fn from_unit(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values
            .iter()
            .map(|&v| f64::from(v) * f64::from(v))
            .sum::<f64>()
            .sqrt()
    }

    pub fn dot(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.values, &other.values)
    }
}

/// Dot product accumulated in 64-bit.
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Keeps the first `dimension` coordinates and renormalizes.
pub fn truncate_dimension(vec: &EmbeddingVector, dimension: usize) -> Result<EmbeddingVector> {
    if dimension == 0 || dimension > vec.dimension() {
        return Err(Error::InvalidInput(format!(
            "cannot truncate a {}-d vector to {dimension}",
            vec.dimension()
        )));
    }
    EmbeddingVector::normalized(vec.values[..dimension].to_vec())
}

/// Batch embedding backend.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, ProviderError>;

    fn count_tokens(&self, text: &str) -> usize {
        text::whitespace_count(text)
    }

    fn truncate_tokens(&self, text: &str, max_tokens: usize) -> String {
        text::whitespace_truncate(text, max_tokens).to_string()
    }
}

/// Text sent to the provider: prefix applied once, then truncated to the
/// input budget.
pub fn provider_input(
    text: &str,
    prefix: &str,
    spec: &EmbeddingProviderSpec,
    provider: &dyn EmbeddingProvider,
) -> String {
    let full = format!("{prefix}{text}");
    if provider.count_tokens(&full) <= spec.max_input_tokens {
        full
    } else {
        provider.truncate_tokens(&full, spec.max_input_tokens)
    }
}

fn embed_prepared(
    inputs: Vec<String>,
    spec: &EmbeddingProviderSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(spec.max_batch_size) {
        let raw = provider.embed_batch(chunk)?;
        out.extend(check_batch(chunk, raw, spec)?);
    }
    Ok(out)
}

pub(crate) fn check_batch(
    chunk: &[String],
    raw: Vec<Vec<f32>>,
    spec: &EmbeddingProviderSpec,
) -> Result<Vec<EmbeddingVector>> {
    if raw.len() != chunk.len() {
        return Err(ProviderError::Fatal(format!(
            "provider returned {} vectors for {} inputs",
            raw.len(),
            chunk.len()
        ))
        .into());
    }
    raw.into_iter()
        .map(|v| {
            if v.len() != spec.dimension {
                return Err(Error::Config(format!(
                    "provider `{}` returned dimension {}, expected {}",
                    spec.provider_name,
                    v.len(),
                    spec.dimension
                )));
            }
            EmbeddingVector::normalized(v)
        })
        .collect()
}

pub fn embed_query(
    text: &str,
    spec: &EmbeddingProviderSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<EmbeddingVector> {
    if text.is_empty() {
        return Err(Error::InvalidInput("query text is empty".into()));
    }
    let input = provider_input(text, &spec.query_prefix, spec, provider);
    Ok(embed_prepared(vec![input], spec, provider)?.remove(0))
}

pub fn embed_documents(
    texts: &[&str],
    spec: &EmbeddingProviderSpec,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<EmbeddingVector>> {
    let inputs = texts
        .iter()
        .map(|t| provider_input(t, &spec.document_prefix, spec, provider))
        .collect();
    embed_prepared(inputs, spec, provider)
}

/// A provider bound to its spec.
#[derive(Clone)]
pub struct Embedder {
    pub spec: EmbeddingProviderSpec,
    pub provider: Arc<dyn EmbeddingProvider>,
}

impl Embedder {
    pub fn new(spec: EmbeddingProviderSpec, provider: Arc<dyn EmbeddingProvider>) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, provider })
    }

    /// Hash embedder with no prefixes.
    pub fn hash(dimension: usize, seed: u64) -> Result<Self> {
        Self::new(
            EmbeddingProviderSpec::new(format!("hash-{seed}"), dimension),
            Arc::new(HashEmbeddingProvider::new(dimension, seed)?),
        )
    }

    pub fn query(&self, text: &str) -> Result<EmbeddingVector> {
        embed_query(text, &self.spec, self.provider.as_ref())
    }

    pub fn documents(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        embed_documents(texts, &self.spec, self.provider.as_ref())
    }

    /// Embeds texts without any prefix, for analysis rather than retrieval.
    pub fn raw(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>> {
        let inputs = texts
            .iter()
            .map(|t| provider_input(t, "", &self.spec, self.provider.as_ref()))
            .collect();
        embed_prepared(inputs, &self.spec, self.provider.as_ref())
    }
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder").field("spec", &self.spec).finish()
    }
}
