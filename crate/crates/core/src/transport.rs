//! Pluggable JSON-over-HTTP transport for hosted providers.
//!
//! Endpoints are configured through environment variables only; credentials
//! never appear in config files or flags.

use std::time::Duration;

use serde_json::Value;

use crate::error::{Error, ProviderError, Result};

pub const EMBED_URL_VAR: &str = "EMBED_API_URL";
pub const EMBED_KEY_VAR: &str = "EMBED_API_KEY";
pub const COMPLETE_URL_VAR: &str = "COMPLETE_API_URL";
pub const COMPLETE_KEY_VAR: &str = "COMPLETE_API_KEY";

#[derive(Clone)]
pub struct Endpoint {
    pub url: String,
    pub credential: Option<String>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint")
            .field("url", &self.url)
            .field("credential", &self.credential.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl Endpoint {
    /// Reads the URL from `url_var` (required) and the bearer credential
    /// from `key_var` (optional).
    pub fn from_env(url_var: &str, key_var: &str) -> Result<Self> {
        let url = std::env::var(url_var)
            .map_err(|_| Error::Config(format!("environment variable {url_var} is not set")))?;
        Ok(Self {
            url,
            credential: std::env::var(key_var).ok().filter(|k| !k.is_empty()),
        })
    }
}

pub trait Transport: Send + Sync {
    fn post_json(&self, endpoint: &Endpoint, body: &Value) -> std::result::Result<Value, ProviderError>;
}

impl ProviderError {
    /// Attaches the failed inputs to a retriable error.
    pub fn with_batch(self, texts: &[String]) -> Self {
        match self {
            ProviderError::Retriable { message, .. } => ProviderError::Retriable {
                message,
                batch: texts.to_vec(),
            },
            fatal => fatal,
        }
    }
}

/// Blocking HTTP transport.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Default for HttpTransport {
    fn default() -> Self {
        Self::new(Duration::from_secs(120))
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, endpoint: &Endpoint, body: &Value) -> std::result::Result<Value, ProviderError> {
        let mut req = self.agent.post(&endpoint.url);
        if let Some(key) = &endpoint.credential {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        match req.send_json(body.clone()) {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| ProviderError::Fatal(format!("invalid JSON response: {e}"))),
            Err(ureq::Error::Status(code, resp)) => {
                let msg = format!("HTTP {code}: {}", resp.into_string().unwrap_or_default());
                if code == 429 || code >= 500 {
                    Err(ProviderError::Retriable {
                        message: msg,
                        batch: vec![],
                    })
                } else {
                    Err(ProviderError::Fatal(msg))
                }
            }
            Err(ureq::Error::Transport(t)) => Err(ProviderError::Retriable {
                message: t.to_string(),
                batch: vec![],
            }),
        }
    }
}
