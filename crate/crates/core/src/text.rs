//! Tokenization shared by the hash embedder, the toy encoder and Rouge-1.

/// Lowercases `text` and splits it on every non-alphanumeric character.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Number of whitespace-delimited tokens.
pub fn whitespace_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps the first `max_tokens` whitespace-delimited tokens of `text`,
/// preserving the original spacing between them.
pub fn whitespace_truncate(text: &str, max_tokens: usize) -> &str {
    if max_tokens == 0 {
        return "";
    }
    let mut seen = 0;
    let mut in_token = false;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if in_token {
                in_token = false;
                if seen == max_tokens {
                    return &text[..i];
                }
            }
        } else if !in_token {
            in_token = true;
            seen += 1;
        }
    }
    text
}
