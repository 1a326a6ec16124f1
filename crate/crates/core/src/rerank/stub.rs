//! Deterministic completion providers for tests and offline runs.

use std::sync::atomic::{AtomicUsize, Ordering};

use regex::Regex;

use crate::error::ProviderError;
use crate::text::whitespace_count;

use super::{Completion, CompletionProvider, TokenUsage};

fn block_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^\[(\d+)\] ").expect("valid regex"))
}

/// `(identifier, block text)` for every candidate block in a prompt.
pub fn prompt_blocks(prompt: &str) -> Vec<(usize, &str)> {
    let caps: Vec<(usize, usize, usize)> = block_re()
        .captures_iter(prompt)
        .filter_map(|c| {
            let m = c.get(0)?;
            Some((c[1].parse().ok()?, m.start(), m.end()))
        })
        .collect();
    caps.iter()
        .enumerate()
        .map(|(i, &(id, _, body_start))| {
            let end = caps.get(i + 1).map(|c| c.1).unwrap_or(prompt.len());
            (id, &prompt[body_start..end])
        })
        .collect()
}

fn render(ids: &[usize]) -> String {
    ids.iter().map(|i| format!("[{i}]")).collect::<Vec<_>>().join(" > ")
}

fn reply(prompt: &str, ids: &[usize]) -> Completion {
    let text = render(ids);
    Completion {
        usage: TokenUsage {
            prompt_tokens: whitespace_count(prompt) as u64,
            output_tokens: whitespace_count(&text) as u64,
        },
        text,
    }
}

/// Echoes `[1] > [2] > ... > [n]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStub;

impl CompletionProvider for IdentityStub {
    fn complete(&self, prompt: &str, _max: usize) -> Result<Completion, ProviderError> {
        let ids: Vec<usize> = prompt_blocks(prompt).iter().map(|b| b.0).collect();
        Ok(reply(prompt, &ids))
    }
}

/// Emits `[n] > ... > [1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReverseStub;

impl CompletionProvider for ReverseStub {
    fn complete(&self, prompt: &str, _max: usize) -> Result<Completion, ProviderError> {
        let ids: Vec<usize> = prompt_blocks(prompt).iter().rev().map(|b| b.0).collect();
        Ok(reply(prompt, &ids))
    }
}

/// Puts every block containing one of the hidden gold markers first, then
/// the rest in window order.
#[derive(Debug, Clone, Default)]
pub struct OracleStub {
    markers: Vec<String>,
}

impl OracleStub {
    pub fn new(markers: Vec<String>) -> Self {
        Self { markers }
    }

    /// Markers matching [`super::candidate_text`] for the given qualified names.
    pub fn for_qualified_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Self {
        Self::new(names.into_iter().map(|n| format!("# {n}\n")).collect())
    }
}

impl CompletionProvider for OracleStub {
    fn complete(&self, prompt: &str, _max: usize) -> Result<Completion, ProviderError> {
        let blocks = prompt_blocks(prompt);
        let is_gold = |body: &str| self.markers.iter().any(|m| body.contains(m.as_str()));
        let mut ids: Vec<usize> = blocks.iter().filter(|b| is_gold(b.1)).map(|b| b.0).collect();
        ids.extend(blocks.iter().filter(|b| !is_gold(b.1)).map(|b| b.0));
        Ok(reply(prompt, &ids))
    }
}

/// Always fails; counts attempts.
#[derive(Debug, Default)]
pub struct FailingStub {
    retriable: bool,
    pub attempts: AtomicUsize,
}

impl FailingStub {
    pub fn retriable() -> Self {
        Self {
            retriable: true,
            attempts: AtomicUsize::new(0),
        }
    }

    pub fn fatal() -> Self {
        Self {
            retriable: false,
            attempts: AtomicUsize::new(0),
        }
    }
}

impl CompletionProvider for FailingStub {
    fn complete(&self, _prompt: &str, _max: usize) -> Result<Completion, ProviderError> {
        self.attempts.fetch_add(1, Ordering::Relaxed);
        if self.retriable {
            Err(ProviderError::Retriable {
                message: "stub outage".into(),
                batch: vec![],
            })
        } else {
            Err(ProviderError::Fatal("stub rejects every prompt".into()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_split_on_markers_at_line_start() {
        let p = "Rank [] > [].\n\nIssue: see [3] inline\n\n[1] a\nb\n\n[2] c\n";
        let b = prompt_blocks(p);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0], (1, "a\nb\n\n"));
        assert_eq!(b[1], (2, "c\n"));
        assert_eq!(IdentityStub.complete(p, 10).unwrap().text, "[1] > [2]");
        assert_eq!(ReverseStub.complete(p, 10).unwrap().text, "[2] > [1]");
    }
}
