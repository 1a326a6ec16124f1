//! Unified diff parsing, tracking line numbers on the base side.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hunk {
    pub header: String,
    pub old_start: usize,
    pub old_len: usize,
    pub new_start: usize,
    pub new_len: usize,
    /// Base-side lines removed or replaced by the hunk.
    pub removed_lines: Vec<usize>,
    /// For each run of added lines, the base line it follows (0 = file start).
    pub insertions_after: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileDiff {
    /// `None` for newly created files.
    pub old_path: Option<String>,
    /// `None` for deleted files.
    pub new_path: Option<String>,
    pub hunks: Vec<Hunk>,
}

impl FileDiff {
    pub fn base_path(&self) -> Option<&str> {
        self.old_path.as_deref()
    }

    /// Path on whichever side exists.
    pub fn any_path(&self) -> Option<&str> {
        self.new_path.as_deref().or(self.old_path.as_deref())
    }
}

fn strip_side(path: &str, side: char) -> Option<String> {
    let path = path.split('\t').next().unwrap_or(path).trim_end();
    if path == "/dev/null" {
        return None;
    }
    let prefix = [side, '/'];
    let p: String = prefix.iter().collect();
    Some(path.strip_prefix(p.as_str()).unwrap_or(path).to_string())
}

fn parse_range(s: &str) -> Option<(usize, usize)> {
    match s.split_once(',') {
        Some((start, len)) => Some((start.parse().ok()?, len.parse().ok()?)),
        None => Some((s.parse().ok()?, 1)),
    }
}

fn parse_header(line: &str) -> Result<(usize, usize, usize, usize)> {
    let bad = |msg: &str| Error::DiffParse {
        header: line.to_string(),
        message: msg.to_string(),
    };
    let rest = line.strip_prefix("@@ ").ok_or_else(|| bad("missing `@@ ` prefix"))?;
    let end = rest.find(" @@").ok_or_else(|| bad("missing closing `@@`"))?;
    let mut parts = rest[..end].split_whitespace();
    let old = parts
        .next()
        .and_then(|p| p.strip_prefix('-'))
        .and_then(parse_range)
        .ok_or_else(|| bad("bad base range"))?;
    let new = parts
        .next()
        .and_then(|p| p.strip_prefix('+'))
        .and_then(parse_range)
        .ok_or_else(|| bad("bad target range"))?;
    if parts.next().is_some() {
        return Err(bad("unexpected tokens in range"));
    }
    Ok((old.0, old.1, new.0, new.1))
}

/// Parses a multi-file unified diff. Errors name the offending hunk header.
pub fn parse_unified_diff(text: &str) -> Result<Vec<FileDiff>> {
    let mut files: Vec<FileDiff> = Vec::new();
    let mut lines = text.lines().peekable();
    let mut pending_old: Option<Option<String>> = None;

    while let Some(line) = lines.next() {
        if line.starts_with("diff --git ") {
            pending_old = None;
            continue;
        }
        if let Some(rest) = line.strip_prefix("--- ") {
            pending_old = Some(strip_side(rest, 'a'));
            continue;
        }
        if let Some(rest) = line.strip_prefix("+++ ") {
            let old_path = pending_old.take().ok_or_else(|| Error::DiffParse {
                header: line.to_string(),
                message: "`+++` without preceding `---`".into(),
            })?;
            files.push(FileDiff {
                old_path,
                new_path: strip_side(rest, 'b'),
                hunks: Vec::new(),
            });
            continue;
        }
        if line.starts_with("@@") {
            let (old_start, old_len, new_start, new_len) = parse_header(line)?;
            let file = files.last_mut().ok_or_else(|| Error::DiffParse {
                header: line.to_string(),
                message: "hunk before any file header".into(),
            })?;
            let mut hunk = Hunk {
                header: line.to_string(),
                old_start,
                old_len,
                new_start,
                new_len,
                removed_lines: Vec::new(),
                insertions_after: Vec::new(),
            };
            let mut old_left = old_len;
            let mut new_left = new_len;
            let mut old_cur = if old_len == 0 { old_start + 1 } else { old_start };
            let mut in_insertion = false;
            while old_left > 0 || new_left > 0 {
                let body = lines.next().ok_or_else(|| Error::DiffParse {
                    header: hunk.header.clone(),
                    message: "diff ended inside hunk".into(),
                })?;
                let short = |what: &str| Error::DiffParse {
                    header: hunk.header.clone(),
                    message: format!("hunk has more {what} lines than its header declares"),
                };
                match body.chars().next() {
                    Some('-') => {
                        if old_left == 0 {
                            return Err(short("base"));
                        }
                        hunk.removed_lines.push(old_cur);
                        old_cur += 1;
                        old_left -= 1;
                        in_insertion = false;
                    }
                    Some('+') => {
                        if new_left == 0 {
                            return Err(short("target"));
                        }
                        if !in_insertion {
                            hunk.insertions_after.push(old_cur - 1);
                            in_insertion = true;
                        }
                        new_left -= 1;
                    }
                    Some(' ') | None => {
                        if old_left == 0 || new_left == 0 {
                            return Err(short("context"));
                        }
                        old_cur += 1;
                        old_left -= 1;
                        new_left -= 1;
                        in_insertion = false;
                    }
                    Some('\\') => {}
                    Some(_) => {
                        return Err(Error::DiffParse {
                            header: hunk.header.clone(),
                            message: format!("unexpected line in hunk body: {body:?}"),
                        })
                    }
                }
            }
            while matches!(lines.peek(), Some(l) if l.starts_with('\\')) {
                lines.next();
            }
            file.hunks.push(hunk);
        }
    }
    Ok(files)
}

/// Heuristic for test sources: a `test`/`tests`/`testing` directory, a
/// `test_*.py` / `*_test.py` file name, or `conftest.py`.
pub fn is_test_path(path: &str) -> bool {
    let mut parts = path.split('/').peekable();
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            let stem = part.rsplit_once('.').map(|(s, _)| s).unwrap_or(part);
            return stem.starts_with("test_")
                || stem.ends_with("_test")
                || stem == "test"
                || stem == "tests"
                || stem == "conftest";
        }
        if matches!(part, "test" | "tests" | "testing") {
            return true;
        }
    }
    false
}
