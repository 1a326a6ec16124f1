use serde_json::{json, Value};

use crate::error::ProviderError;
use crate::transport::{Endpoint, Transport};

use super::EmbeddingProvider;

/// Embedding provider speaking the common `{"model", "input"}` ->
/// `{"data": [{"embedding": [...]}]}` JSON shape.
pub struct RemoteEmbeddingProvider<T: Transport> {
    endpoint: Endpoint,
    model: String,
    transport: T,
}

impl<T: Transport> RemoteEmbeddingProvider<T> {
    pub fn new(endpoint: Endpoint, model: impl Into<String>, transport: T) -> Self {
        Self {
            endpoint,
            model: model.into(),
            transport,
        }
    }
}

impl<T: Transport> EmbeddingProvider for RemoteEmbeddingProvider<T> {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let body = json!({ "model": self.model, "input": texts });
        let resp = self
            .transport
            .post_json(&self.endpoint, &body)
            .map_err(|e| e.with_batch(texts))?;
        parse_embeddings(&resp, texts.len())
    }
}

fn parse_embeddings(resp: &Value, expected: usize) -> Result<Vec<Vec<f32>>, ProviderError> {
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Fatal("response has no `data` array".into()))?;
    let mut rows: Vec<(usize, Vec<f32>)> = Vec::with_capacity(data.len());
    for (pos, item) in data.iter().enumerate() {
        let idx = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let emb = item
            .get("embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| ProviderError::Fatal(format!("item {pos} has no embedding")))?
            .iter()
            .map(|v| {
                v.as_f64()
                    .map(|f| f as f32)
                    .ok_or_else(|| ProviderError::Fatal("non-numeric embedding value".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push((idx, emb));
    }
    if rows.len() != expected {
        return Err(ProviderError::Fatal(format!(
            "expected {expected} embeddings, got {}",
            rows.len()
        )));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, v)| v).collect())
}
