use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoSelectionCriteria {
    pub min_language_fraction: f64,
    pub exclusion_list: BTreeSet<String>,
    pub dedup_threshold: f64,
}

impl Default for RepoSelectionCriteria {
    fn default() -> Self {
        Self {
            min_language_fraction: 0.80,
            exclusion_list: BTreeSet::new(),
            dedup_threshold: 0.9,
        }
    }
}

impl RepoSelectionCriteria {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("min_language_fraction", self.min_language_fraction),
            ("dedup_threshold", self.dedup_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepoCandidate {
    pub repo_id: String,
    pub language_fraction: f64,
    /// Hashes of normalized file contents.
    pub fingerprint: HashSet<u64>,
}

pub fn jaccard(a: &HashSet<u64>, b: &HashSet<u64>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    inter as f64 / union as f64
}

/// Language share, exclusion list, then near-duplicate removal against the
/// repositories already kept (input order decides which copy survives).
pub fn select_repositories(candidates: &[RepoCandidate], criteria: &RepoSelectionCriteria) -> Vec<String> {
    let mut kept: Vec<&RepoCandidate> = Vec::new();
    for c in candidates {
        if c.language_fraction < criteria.min_language_fraction
            || criteria.exclusion_list.contains(&c.repo_id)
        {
            continue;
        }
        if kept
            .iter()
            .any(|k| jaccard(&k.fingerprint, &c.fingerprint) >= criteria.dedup_threshold)
        {
            continue;
        }
        kept.push(c);
    }
    kept.into_iter().map(|c| c.repo_id.clone()).collect()
}

const SOURCE_EXTENSIONS: &[&str] = &[
    ".py", ".pyx", ".pyi", ".js", ".ts", ".jsx", ".tsx", ".java", ".c", ".h", ".cc", ".cpp",
    ".hpp", ".cs", ".go", ".rs", ".rb", ".php", ".scala", ".kt", ".swift", ".m", ".sh", ".pl",
    ".lua", ".r", ".jl", ".ipynb",
];

fn walk_files(root: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| Error::SnapshotAccess {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() {
            files.push(entry.into_path());
        }
    }
    Ok(files)
}

/// Byte share of files ending in one of `extensions` among all recognized
/// source files. Zero when the checkout has no source files.
pub fn language_fraction(root: &Path, extensions: &[&str]) -> Result<f64> {
    let mut matching = 0u64;
    let mut total = 0u64;
    for path in walk_files(root)? {
        let name = path.file_name().unwrap_or_default().to_string_lossy().to_lowercase();
        if !SOURCE_EXTENSIONS.iter().any(|e| name.ends_with(e))
            && !extensions.iter().any(|e| name.ends_with(e))
        {
            continue;
        }
        let len = std::fs::metadata(&path).map_err(|e| Error::io(&path, e))?.len();
        total += len;
        if extensions.iter().any(|e| name.ends_with(e)) {
            matching += len;
        }
    }
    Ok(if total == 0 { 0.0 } else { matching as f64 / total as f64 })
}

/// Content hashes of every file after trimming line ends and dropping
/// blank lines.
pub fn repo_fingerprint(root: &Path) -> Result<HashSet<u64>> {
    let mut out = HashSet::new();
    for path in walk_files(root)? {
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let text = String::from_utf8_lossy(&bytes);
        let mut h = Sha256::new();
        for line in text.lines().map(str::trim_end).filter(|l| !l.is_empty()) {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        let d = h.finalize();
        out.insert(u64::from_le_bytes(d[..8].try_into().expect("8 bytes")));
    }
    Ok(out)
}
