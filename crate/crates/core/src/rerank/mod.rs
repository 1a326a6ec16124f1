//! Listwise reranking with identifier-tagged candidates, a back-to-front
//! sliding window, and the first-identifier training objective.

mod prompt;
mod remote;
pub mod stub;
mod train;

use std::collections::{HashMap, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::embed::{RankedEntry, RankedList};
use crate::error::{Error, ProviderError, Result};
use crate::units::CodeUnit;

pub use prompt::{
    build_prompt, BuiltPrompt, PromptBudget, TokenAccounting, TokenCounter, WhitespaceCounter,
    DEFAULT_INSTRUCTION, DEFAULT_PER_CANDIDATE_TOKENS, DEFAULT_TOTAL_TOKENS,
};
pub use remote::RemoteCompletionProvider;
pub use train::{build_training_example, first_token_loss, RerankTrainingExample};

pub const DEFAULT_WINDOW_SIZE: usize = 10;
pub const DEFAULT_STRIDE: usize = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.prompt_tokens += rhs.prompt_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait CompletionProvider: Send + Sync {
    fn complete(&self, prompt: &str, max_output_tokens: usize) -> std::result::Result<Completion, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RerankCandidate {
    pub unit_id: String,
    pub text: String,
}

/// Text shown to the reranker for a unit: a `# qualified_name` line, then
/// the source.
pub fn candidate_text(unit: &CodeUnit) -> String {
    format!("# {}\n{}", unit.qualified_name, unit.source_text)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowCandidate {
    pub identifier: usize,
    pub unit_id: String,
    pub candidate_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RerankWindow {
    pub candidates: Vec<WindowCandidate>,
}

impl RerankWindow {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// A full permutation of a window's identifiers, best first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedPermutation {
    pub order: Vec<usize>,
}

/// Identifier `i` goes to the `i`-th candidate.
pub fn assign_identifiers(candidates: &[RerankCandidate], window_size: usize) -> Result<RerankWindow> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("window needs at least one candidate".into()));
    }
    if candidates.len() > window_size {
        return Err(Error::WindowSize {
            len: candidates.len(),
            max: window_size,
        });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = candidates.iter().find(|c| !seen.insert(c.unit_id.as_str())) {
        return Err(Error::InvalidInput(format!("duplicate unit {} in window", dup.unit_id)));
    }
    Ok(RerankWindow {
        candidates: candidates
            .iter()
            .enumerate()
            .map(|(i, c)| WindowCandidate {
                identifier: i + 1,
                unit_id: c.unit_id.clone(),
                candidate_text: c.text.clone(),
            })
            .collect(),
    })
}

fn bracket_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\[(\d+)\]").expect("valid regex"))
}

/// Bracketed integers in order of appearance, keeping only in-range first
/// occurrences; identifiers never mentioned follow in window order.
pub fn parse_permutation(model_output: &str, window_len: usize) -> RankedPermutation {
    let mut seen = vec![false; window_len + 1];
    let mut order = Vec::with_capacity(window_len);
    for cap in bracket_re().captures_iter(model_output) {
        let Ok(id) = cap[1].parse::<usize>() else { continue };
        if (1..=window_len).contains(&id) && !seen[id] {
            seen[id] = true;
            order.push(id);
        }
    }
    order.extend((1..=window_len).filter(|&id| !seen[id]));
    RankedPermutation { order }
}

#[derive(Debug, Clone)]
pub struct RerankOptions {
    pub window_size: usize,
    pub stride: usize,
    /// Extra attempts after a retriable failure.
    pub retries: usize,
    pub instruction: String,
    /// `None` sizes the completion to the window.
    pub max_output_tokens: Option<usize>,
}

impl Default for RerankOptions {
    fn default() -> Self {
        Self {
            window_size: DEFAULT_WINDOW_SIZE,
            stride: DEFAULT_STRIDE,
            retries: 2,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            max_output_tokens: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub order: Vec<RerankCandidate>,
    /// True when the provider kept failing and the input order was returned.
    pub fell_back: bool,
    pub usage: TokenUsage,
    pub calls: usize,
    pub accounting: TokenAccounting,
}

/// Reranks a single window: identifiers, prompt, completion, parse, reorder.
pub fn rerank_window(
    query_text: &str,
    candidates: &[RerankCandidate],
    budget: &PromptBudget,
    provider: &dyn CompletionProvider,
    options: &RerankOptions,
) -> Result<WindowOutcome> {
    let window = assign_identifiers(candidates, options.window_size)?;
    let prompt = build_prompt(query_text, &window, budget, &options.instruction)?;
    let max_out = options
        .max_output_tokens
        .unwrap_or(4 * window.len() + 16);

    let mut usage = TokenUsage::default();
    let mut calls = 0;
    let mut completion = None;
    for _ in 0..=options.retries {
        calls += 1;
        match provider.complete(&prompt.text, max_out) {
            Ok(c) => {
                usage += c.usage;
                completion = Some(c.text);
                break;
            }
            Err(e) if e.is_retriable() => {
                log::warn!("rerank provider failed (attempt {calls}): {e}");
            }
            Err(e) => {
                log::warn!("rerank provider failed permanently: {e}");
                break;
            }
        }
    }

    let (order, fell_back) = match completion {
        Some(text) => {
            let perm = parse_permutation(&text, window.len());
            (
                perm.order
                    .into_iter()
                    .map(|id| candidates[id - 1].clone())
                    .collect(),
                false,
            )
        }
        None => (candidates.to_vec(), true),
    };
    Ok(WindowOutcome {
        order,
        fell_back,
        usage,
        calls,
        accounting: prompt.accounting,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlidingOutcome {
    /// Scores are `1 / rank`.
    pub ranked: RankedList,
    pub window_calls: usize,
    pub provider_calls: usize,
    pub fallbacks: usize,
    pub usage: TokenUsage,
    /// Largest prompt total seen.
    pub max_prompt_tokens: usize,
}

/// `(start, end)` ranges of a back-to-front pass over `len` items.
pub fn window_schedule(len: usize, window_size: usize, stride: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    if len == 0 {
        return out;
    }
    let mut end = len;
    loop {
        let start = end.saturating_sub(window_size);
        out.push((start, end));
        if start == 0 {
            break;
        }
        end -= stride;
    }
    out
}

/// One back-to-front pass of overlapping windows; each window is reranked in
/// place so strong candidates near the tail can climb to the head.
pub fn sliding_window_rerank_candidates(
    query_id: &str,
    query_text: &str,
    candidates: &[RerankCandidate],
    budget: &PromptBudget,
    provider: &dyn CompletionProvider,
    options: &RerankOptions,
) -> Result<SlidingOutcome> {
    if options.stride == 0 || options.window_size < options.stride {
        return Err(Error::Config(format!(
            "need 1 <= stride <= window_size, got stride {} window {}",
            options.stride, options.window_size
        )));
    }
    let mut current = candidates.to_vec();
    let mut out = SlidingOutcome {
        ranked: RankedList::default(),
        window_calls: 0,
        provider_calls: 0,
        fallbacks: 0,
        usage: TokenUsage::default(),
        max_prompt_tokens: 0,
    };
    for (start, end) in window_schedule(current.len(), options.window_size, options.stride) {
        let w = rerank_window(query_text, &current[start..end], budget, provider, options)?;
        out.window_calls += 1;
        out.provider_calls += w.calls;
        out.usage += w.usage;
        out.max_prompt_tokens = out.max_prompt_tokens.max(w.accounting.total);
        if w.fell_back {
            out.fallbacks += 1;
        }
        current.splice(start..end, w.order);
    }
    out.ranked = RankedList::new(
        query_id,
        current
            .into_iter()
            .enumerate()
            .map(|(i, c)| RankedEntry {
                unit_id: c.unit_id,
                score: 1.0 / (i + 1) as f64,
            })
            .collect(),
    );
    Ok(out)
}

/// Sliding-window rerank of a retrieval result; `texts` maps unit ids to
/// their candidate text.
pub fn sliding_window_rerank(
    query_text: &str,
    ranked: &RankedList,
    texts: &HashMap<String, String>,
    budget: &PromptBudget,
    provider: &dyn CompletionProvider,
    options: &RerankOptions,
) -> Result<SlidingOutcome> {
    let candidates = ranked
        .entries
        .iter()
        .map(|e| {
            texts
                .get(&e.unit_id)
                .map(|t| RerankCandidate {
                    unit_id: e.unit_id.clone(),
                    text: t.clone(),
                })
                .ok_or_else(|| Error::Integrity(format!("no candidate text for {}", e.unit_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    sliding_window_rerank_candidates(&ranked.query_id, query_text, &candidates, budget, provider, options)
}
