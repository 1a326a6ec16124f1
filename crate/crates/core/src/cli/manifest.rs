use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{language_fraction, repo_fingerprint, select_repositories, RepoCandidate, RepoSelectionCriteria};
use crate::error::{Error, Result};
use crate::io::read_jsonl;
use crate::embed::{SnapshotBinding, VectorIndex};
use crate::units::{extract_units, read_inventory, CodeUnit, RepoSnapshot, DEFAULT_EXTENSION};

/// One line of a repos manifest. Relative paths resolve against the
/// manifest's directory. Units come from `inventory` when given, otherwise
/// they are extracted from `root`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoEntry {
    pub repo_id: String,
    pub commit_ref: String,
    #[serde(default)]
    pub root: Option<PathBuf>,
    #[serde(default)]
    pub inventory: Option<PathBuf>,
    #[serde(default)]
    pub index: Option<PathBuf>,
}

impl RepoEntry {
    pub fn binding(&self) -> SnapshotBinding {
        SnapshotBinding {
            repo_id: self.repo_id.clone(),
            commit_ref: self.commit_ref.clone(),
        }
    }
}

pub struct Repo {
    pub entry: RepoEntry,
    pub units: Vec<CodeUnit>,
}

pub struct Repos {
    pub repos: Vec<Repo>,
}

fn resolve(base: &Path, p: &Option<PathBuf>) -> Option<PathBuf> {
    p.as_ref().map(|p| if p.is_absolute() { p.clone() } else { base.join(p) })
}

impl Repos {
    pub fn load(manifest: &Path) -> Result<Self> {
        super::require_file(manifest)?;
        let base = manifest.parent().unwrap_or(Path::new("."));
        let entries: Vec<RepoEntry> = read_jsonl(manifest)?;
        let mut seen = HashSet::new();
        let mut repos = Vec::with_capacity(entries.len());
        for mut entry in entries {
            if !seen.insert((entry.repo_id.clone(), entry.commit_ref.clone())) {
                return Err(Error::Config(format!(
                    "{}: {}@{} listed twice",
                    manifest.display(),
                    entry.repo_id,
                    entry.commit_ref
                )));
            }
            entry.root = resolve(base, &entry.root);
            entry.inventory = resolve(base, &entry.inventory);
            entry.index = resolve(base, &entry.index);
            let units = match (&entry.inventory, &entry.root) {
                (Some(inv), _) => {
                    super::require_file(inv)?;
                    read_inventory(inv)?
                }
                (None, Some(root)) => {
                    let snap = RepoSnapshot::new(&entry.repo_id, root, &entry.commit_ref)?;
                    let ex = extract_units(&snap, &[DEFAULT_EXTENSION])?;
                    for s in &ex.skipped {
                        log::warn!("{}: skipped {}: {}", entry.repo_id, s.file_path, s.reason);
                    }
                    ex.units
                }
                (None, None) => {
                    return Err(Error::Config(format!(
                        "{}: {} needs an inventory or a root",
                        manifest.display(),
                        entry.repo_id
                    )))
                }
            };
            repos.push(Repo { entry, units });
        }
        Ok(Self { repos })
    }

    pub fn get(&self, repo_id: &str, commit_ref: &str) -> Option<&Repo> {
        self.repos
            .iter()
            .find(|r| r.entry.repo_id == repo_id && r.entry.commit_ref == commit_ref)
    }

    pub fn units_for(&self, repo_id: &str, commit_ref: &str) -> Option<&[CodeUnit]> {
        self.get(repo_id, commit_ref).map(|r| r.units.as_slice())
    }

    pub fn all_units(&self) -> impl Iterator<Item = &CodeUnit> {
        self.repos.iter().flat_map(|r| r.units.iter())
    }

    /// Keeps repositories passing language share, exclusion and dedup
    /// checks. Every entry needs a root.
    pub fn select(self, criteria: &RepoSelectionCriteria) -> Result<(Self, Vec<String>)> {
        criteria.validate()?;
        let candidates = self
            .repos
            .iter()
            .map(|r| {
                let root = r.entry.root.as_ref().ok_or_else(|| {
                    Error::Config(format!("repository selection needs a root for {}", r.entry.repo_id))
                })?;
                Ok(RepoCandidate {
                    repo_id: format!("{}@{}", r.entry.repo_id, r.entry.commit_ref),
                    language_fraction: language_fraction(root, &[DEFAULT_EXTENSION])?,
                    fingerprint: repo_fingerprint(root)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let kept: HashSet<String> = select_repositories(&candidates, criteria).into_iter().collect();
        let (keep, dropped): (Vec<Repo>, Vec<Repo>) = self
            .repos
            .into_iter()
            .partition(|r| kept.contains(&format!("{}@{}", r.entry.repo_id, r.entry.commit_ref)));
        Ok((Self { repos: keep }, dropped.into_iter().map(|r| r.entry.repo_id).collect()))
    }

    pub fn load_index(repo: &Repo) -> Result<VectorIndex> {
        let path = repo
            .entry
            .index
            .as_ref()
            .ok_or_else(|| Error::Config(format!("no index path for {}", repo.entry.repo_id)))?;
        super::require_file(path)?;
        let idx = VectorIndex::read(path)?;
        if *idx.binding() != repo.entry.binding() {
            return Err(Error::Integrity(format!(
                "{} is bound to {}@{}, manifest says {}@{}",
                path.display(),
                idx.binding().repo_id,
                idx.binding().commit_ref,
                repo.entry.repo_id,
                repo.entry.commit_ref
            )));
        }
        Ok(idx)
    }
}
