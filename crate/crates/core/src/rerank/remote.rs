use serde_json::{json, Value};

use crate::error::ProviderError;
use crate::transport::{Endpoint, Transport};

use super::{Completion, CompletionProvider, TokenUsage};

/// Chat-completions style provider: one user message in, the first choice's
/// content and the reported usage out.
pub struct RemoteCompletionProvider<T: Transport> {
    endpoint: Endpoint,
    model: String,
    transport: T,
}

impl<T: Transport> RemoteCompletionProvider<T> {
    pub fn new(endpoint: Endpoint, model: impl Into<String>, transport: T) -> Self {
        Self {
            endpoint,
            model: model.into(),
            transport,
        }
    }
}

impl<T: Transport> CompletionProvider for RemoteCompletionProvider<T> {
    fn complete(&self, prompt: &str, max_output_tokens: usize) -> Result<Completion, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [{ "role": "user", "content": prompt }],
            "max_tokens": max_output_tokens,
            "temperature": 0,
        });
        let resp = self
            .transport
            .post_json(&self.endpoint, &body)
            .map_err(|e| e.with_batch(&[prompt.to_string()]))?;
        let text = resp
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| ProviderError::Fatal("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = |key: &str| resp.pointer(&format!("/usage/{key}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(Completion {
            text,
            usage: TokenUsage {
                prompt_tokens: usage("prompt_tokens"),
                output_tokens: usage("completion_tokens"),
            },
        })
    }
}
