use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text;

use super::RerankWindow;

pub const DEFAULT_PER_CANDIDATE_TOKENS: usize = 1024;
pub const DEFAULT_TOTAL_TOKENS: usize = 16348;

/// Default listwise instruction. `{n}` is replaced by the window size.
pub const DEFAULT_INSTRUCTION: &str = "I will provide you with {n} code functions, each indicated by a numerical identifier []. Rank the functions based on their relevance to the GitHub issue below, most relevant first. Respond only with the ranking in the format [] > [], e.g., [2] > [1].";

pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
    fn truncate(&self, text: &str, max_tokens: usize) -> String;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> usize {
        text::whitespace_count(text)
    }

    fn truncate(&self, text: &str, max_tokens: usize) -> String {
        text::whitespace_truncate(text, max_tokens).to_string()
    }
}

#[derive(Clone)]
pub struct PromptBudget {
    pub per_candidate_max_tokens: usize,
    pub total_max_tokens: usize,
    pub counter: Arc<dyn TokenCounter>,
}

impl std::fmt::Debug for PromptBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PromptBudget")
            .field("per_candidate_max_tokens", &self.per_candidate_max_tokens)
            .field("total_max_tokens", &self.total_max_tokens)
            .finish()
    }
}

impl Default for PromptBudget {
    fn default() -> Self {
        Self {
            per_candidate_max_tokens: DEFAULT_PER_CANDIDATE_TOKENS,
            total_max_tokens: DEFAULT_TOTAL_TOKENS,
            counter: Arc::new(WhitespaceCounter),
        }
    }
}

impl PromptBudget {
    pub fn new(per_candidate_max_tokens: usize, total_max_tokens: usize) -> Result<Self> {
        let b = Self {
            per_candidate_max_tokens,
            total_max_tokens,
            ..Default::default()
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.per_candidate_max_tokens >= self.total_max_tokens {
            return Err(Error::Config(format!(
                "per-candidate budget {} must be below the total budget {}",
                self.per_candidate_max_tokens, self.total_max_tokens
            )));
        }
        Ok(())
    }
}

/// Token counts of each prompt part as measured by the budget's counter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenAccounting {
    pub instruction: usize,
    /// Labels and `[i]` markers.
    pub framing: usize,
    pub query: usize,
    pub query_original: usize,
    pub candidates: Vec<usize>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltPrompt {
    pub text: String,
    pub accounting: TokenAccounting,
    pub query_truncated: bool,
    /// Identifiers whose text was cut to the per-candidate cap.
    pub truncated_candidates: Vec<usize>,
}

const QUERY_LABEL: &str = "Issue:";

fn marker(id: usize) -> String {
    format!("[{id}]")
}

/// Layout: instruction, the query, then one `[i] <candidate>` block per
/// identifier. Candidates are cut to the per-candidate cap; if the total
/// still exceeds the limit, the query's tail is dropped.
pub fn build_prompt(
    query_text: &str,
    window: &RerankWindow,
    budget: &PromptBudget,
    instruction: &str,
) -> Result<BuiltPrompt> {
    if window.candidates.is_empty() {
        return Err(Error::InvalidInput("cannot build a prompt for an empty window".into()));
    }
    budget.validate()?;
    let counter = budget.counter.as_ref();
    let instruction = instruction.replace("{n}", &window.candidates.len().to_string());

    let mut truncated_candidates = Vec::new();
    let mut bodies = Vec::with_capacity(window.candidates.len());
    let mut cand_counts = Vec::with_capacity(window.candidates.len());
    for c in &window.candidates {
        let mut body = c.candidate_text.clone();
        let mut n = counter.count(&body);
        if n > budget.per_candidate_max_tokens {
            body = counter.truncate(&body, budget.per_candidate_max_tokens);
            n = counter.count(&body);
            truncated_candidates.push(c.identifier);
        }
        bodies.push(body);
        cand_counts.push(n);
    }

    let instruction_tokens = counter.count(&instruction);
    let framing = counter.count(QUERY_LABEL)
        + window
            .candidates
            .iter()
            .map(|c| counter.count(&marker(c.identifier)))
            .sum::<usize>();
    let fixed = instruction_tokens + framing + cand_counts.iter().sum::<usize>();
    if fixed > budget.total_max_tokens {
        return Err(Error::Budget {
            minimum_total: fixed,
            limit: budget.total_max_tokens,
        });
    }

    let query_original = counter.count(query_text);
    let room = budget.total_max_tokens - fixed;
    let (query, query_tokens, query_truncated) = if query_original > room {
        let q = counter.truncate(query_text, room);
        let n = counter.count(&q);
        (q, n, true)
    } else {
        (query_text.to_string(), query_original, false)
    };

    let mut text = String::new();
    text.push_str(&instruction);
    text.push_str("\n\n");
    text.push_str(QUERY_LABEL);
    text.push(' ');
    text.push_str(&query);
    for (c, body) in window.candidates.iter().zip(&bodies) {
        text.push_str("\n\n");
        text.push_str(&marker(c.identifier));
        text.push(' ');
        text.push_str(body);
    }
    text.push('\n');

    let total = fixed + query_tokens;
    Ok(BuiltPrompt {
        text,
        accounting: TokenAccounting {
            instruction: instruction_tokens,
            framing,
            query: query_tokens,
            query_original,
            candidates: cand_counts,
            total,
        },
        query_truncated,
        truncated_candidates,
    })
}
