use crate::error::{Error, ProviderError, Result};
use crate::text::word_tokens;

use super::{EmbeddingProvider, EmbeddingVector};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn token_hash(token: &str, seed: u64) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(token.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer; FNV alone has weak low bits.
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Signed bag-of-tokens counts, one bucket per hashed token. Not normalized.
pub fn hash_features(text: &str, dimension: usize, seed: u64) -> Vec<f64> {
    let mut acc = vec![0.0f64; dimension];
    for tok in word_tokens(text) {
        let h = token_hash(&tok, seed);
        let bucket = (h % dimension as u64) as usize;
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        acc[bucket] += sign;
    }
    acc
}

/// Deterministic feature-hashing embedding of `text`.
pub fn hash_embed(text: &str, dimension: usize, seed: u64) -> Result<EmbeddingVector> {
    if dimension < 8 {
        return Err(Error::InvalidInput(format!(
            "hash embedding dimension must be >= 8, got {dimension}"
        )));
    }
    if word_tokens(text).is_empty() {
        return Err(Error::DegenerateVector("text has no tokens".into()));
    }
    let acc = hash_features(text, dimension, seed);
    EmbeddingVector::normalized(acc.into_iter().map(|v| v as f32).collect()).map_err(|_| {
        Error::DegenerateVector("token hashes cancelled to a zero vector".into())
    })
}

/// [`hash_embed`] behind the provider contract.
#[derive(Debug, Clone)]
pub struct HashEmbeddingProvider {
    dimension: usize,
    seed: u64,
}

impl HashEmbeddingProvider {
    pub fn new(dimension: usize, seed: u64) -> Result<Self> {
        if dimension < 8 {
            return Err(Error::InvalidInput(format!(
                "hash embedding dimension must be >= 8, got {dimension}"
            )));
        }
        Ok(Self { dimension, seed })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl EmbeddingProvider for HashEmbeddingProvider {
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                hash_embed(t, self.dimension, self.seed)
                    .map(|v| v.values().to_vec())
                    .map_err(|e| ProviderError::Fatal(format!("hash embedding failed: {e}")))
            })
            .collect()
    }
}
