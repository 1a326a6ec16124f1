//! Function-level code units extracted from repository snapshots.

mod python;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use python::extract_python_file;

/// Suffix of the files extracted when the caller does not choose.
pub const DEFAULT_EXTENSION: &str = ".py";

/// A repository checkout at a fixed commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoSnapshot {
    repo_id: String,
    root_path: PathBuf,
    commit_ref: String,
}

impl RepoSnapshot {
    /// Fails when `root_path` is missing or not a readable directory.
    pub fn new(
        repo_id: impl Into<String>,
        root_path: impl Into<PathBuf>,
        commit_ref: impl Into<String>,
    ) -> Result<Self> {
        let root_path = root_path.into();
        let meta = std::fs::metadata(&root_path).map_err(|source| Error::SnapshotAccess {
            path: root_path.clone(),
            source,
        })?;
        if !meta.is_dir() {
            return Err(Error::SnapshotAccess {
                path: root_path,
                source: std::io::Error::new(std::io::ErrorKind::NotADirectory, "not a directory"),
            });
        }
        std::fs::read_dir(&root_path).map_err(|source| Error::SnapshotAccess {
            path: root_path.clone(),
            source,
        })?;
        Ok(Self {
            repo_id: repo_id.into(),
            root_path,
            commit_ref: commit_ref.into(),
        })
    }

    pub fn repo_id(&self) -> &str {
        &self.repo_id
    }

    pub fn root_path(&self) -> &Path {
        &self.root_path
    }

    pub fn commit_ref(&self) -> &str {
        &self.commit_ref
    }
}

/// Inclusive, 1-based line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn contains(&self, line: usize) -> bool {
        self.start <= line && line <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn intersects(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// One named function or method.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeUnit {
    pub unit_id: String,
    /// Repo-relative, `/`-separated.
    pub file_path: String,
    /// Enclosing class names, outermost first.
    pub module_path: Vec<String>,
    pub function_name: String,
    pub qualified_name: String,
    pub span: Span,
    pub source_text: String,
}

impl CodeUnit {
    /// Key of the module (class) bucket this unit belongs to. Top-level
    /// functions fall into their file's bucket.
    pub fn module_key(&self) -> String {
        if self.module_path.is_empty() {
            self.file_path.clone()
        } else {
            format!("{}::{}", self.file_path, self.module_path.join("::"))
        }
    }
}

/// Stable identifier derived from the snapshot identity and qualified name.
pub fn unit_id_for(repo_id: &str, commit_ref: &str, qualified_name: &str) -> String {
    let mut h = Sha256::new();
    h.update(repo_id.as_bytes());
    h.update([0u8]);
    h.update(commit_ref.as_bytes());
    h.update([0u8]);
    h.update(qualified_name.as_bytes());
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedFile {
    pub file_path: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Extraction {
    pub units: Vec<CodeUnit>,
    pub skipped: Vec<SkippedFile>,
    pub files_scanned: usize,
}

/// Extracts every function and method from files whose name ends with one of
/// `extensions`. Files that fail to parse are skipped and listed in
/// [`Extraction::skipped`].
pub fn extract_units(snapshot: &RepoSnapshot, extensions: &[&str]) -> Result<Extraction> {
    use rayon::prelude::*;

    if extensions.is_empty() {
        return Err(Error::InvalidInput("no file extensions given".into()));
    }
    let files = source_files(snapshot.root_path(), extensions)?;
    let per_file: Vec<std::result::Result<Vec<RawUnit>, SkippedFile>> = files
        .par_iter()
        .map(|rel| {
            let abs = snapshot.root_path().join(rel);
            let bytes = std::fs::read(&abs).map_err(|e| SkippedFile {
                file_path: rel.clone(),
                reason: format!("unreadable: {e}"),
            })?;
            let source = String::from_utf8(bytes).map_err(|_| SkippedFile {
                file_path: rel.clone(),
                reason: "not valid UTF-8".into(),
            })?;
            extract_python_file(rel, &source).map_err(|reason| SkippedFile {
                file_path: rel.clone(),
                reason,
            })
        })
        .collect();

    let mut out = Extraction {
        files_scanned: files.len(),
        ..Default::default()
    };
    for res in per_file {
        match res {
            Ok(raw) => out.units.extend(finalize(snapshot, raw)),
            Err(skip) => {
                log::warn!("skipping {}: {}", skip.file_path, skip.reason);
                out.skipped.push(skip);
            }
        }
    }
    Ok(out)
}

/// A unit before disambiguation and id assignment.
#[derive(Debug, Clone)]
pub struct RawUnit {
    pub file_path: String,
    pub module_path: Vec<String>,
    /// Enclosing classes and functions, outermost first.
    pub scope: Vec<String>,
    pub function_name: String,
    pub span: Span,
    pub source_text: String,
}

fn finalize(snapshot: &RepoSnapshot, mut raw: Vec<RawUnit>) -> Vec<CodeUnit> {
    raw.sort_by_key(|r| r.span.start);
    let mut seen: HashMap<String, usize> = HashMap::new();
    raw.into_iter()
        .map(|r| {
            let mut parts = vec![r.file_path.clone()];
            parts.extend(r.scope.iter().cloned());
            parts.push(r.function_name.clone());
            let base = parts.join("::");
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            let qualified_name = if *count == 1 {
                base
            } else {
                format!("{base}#{count}")
            };
            CodeUnit {
                unit_id: unit_id_for(snapshot.repo_id(), snapshot.commit_ref(), &qualified_name),
                file_path: r.file_path,
                module_path: r.module_path,
                function_name: r.function_name,
                qualified_name,
                span: r.span,
                source_text: r.source_text,
            }
        })
        .collect()
}

/// Repo-relative paths of matching files, sorted lexicographically. Hidden
/// directories (`.git`, `.venv`, ...) are not descended into.
fn source_files(root: &Path, extensions: &[&str]) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let walker = walkdir::WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || !e.file_name().to_string_lossy().starts_with('.'));
    for entry in walker {
        let entry = entry.map_err(|e| Error::SnapshotAccess {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy();
        if !extensions.iter().any(|ext| name.ends_with(ext)) {
            continue;
        }
        let rel = entry
            .path()
            .strip_prefix(root)
            .expect("walkdir yields paths under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/");
        files.push(rel);
    }
    files.sort();
    Ok(files)
}

/// Innermost unit of `file_path` whose span contains `line`.
pub fn locate_enclosing_unit<'a>(
    units: &'a [CodeUnit],
    file_path: &str,
    line: usize,
) -> Option<&'a CodeUnit> {
    units
        .iter()
        .filter(|u| u.file_path == file_path && u.span.contains(line))
        .min_by_key(|u| (u.span.len(), std::cmp::Reverse(u.span.start)))
}

pub fn read_inventory(path: &Path) -> Result<Vec<CodeUnit>> {
    crate::io::read_jsonl(path)
}

pub fn write_inventory(path: &Path, units: &[CodeUnit]) -> Result<()> {
    crate::io::write_jsonl(path, None, units)
}
