//! Contrastive training-data curation: repository and PR selection, diff to
//! function mapping, consistency filtering, and hard-negative mining.

pub mod diff;
mod repo;
pub mod stats;

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::embed::{Embedder, EmbeddingVector};
use crate::error::{Error, Result};
use crate::units::CodeUnit;

pub use repo::{
    jaccard, language_fraction, repo_fingerprint, select_repositories, RepoCandidate,
    RepoSelectionCriteria,
};

pub const DEFAULT_CONSISTENCY_K: usize = 20;
pub const DEFAULT_HARD_NEGATIVES: usize = 15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PullRequestInput")]
pub struct PullRequestRecord {
    pub pr_id: String,
    pub repo_id: String,
    pub base_commit_ref: String,
    pub issue_text: String,
    pub diff_text: String,
    pub links_issue: bool,
    pub modifies_tests: bool,
}

/// Wire form: either `issue_text` or `issue_title` + `issue_body`.
#[derive(Deserialize)]
struct PullRequestInput {
    pr_id: String,
    repo_id: String,
    base_commit_ref: String,
    #[serde(default)]
    issue_text: Option<String>,
    #[serde(default)]
    issue_title: Option<String>,
    #[serde(default)]
    issue_body: Option<String>,
    diff_text: String,
    links_issue: bool,
    modifies_tests: bool,
}

impl TryFrom<PullRequestInput> for PullRequestRecord {
    type Error = String;

    fn try_from(i: PullRequestInput) -> std::result::Result<Self, String> {
        let issue_text = match (i.issue_text, i.issue_title, i.issue_body) {
            (Some(t), _, _) => t,
            (None, title, body) => issue_text_from(
                title.as_deref().unwrap_or(""),
                body.as_deref().unwrap_or(""),
            ),
        };
        if i.links_issue && issue_text.trim().is_empty() {
            return Err(format!("PR {} links an issue but has no issue text", i.pr_id));
        }
        Ok(Self {
            pr_id: i.pr_id,
            repo_id: i.repo_id,
            base_commit_ref: i.base_commit_ref,
            issue_text,
            diff_text: i.diff_text,
            links_issue: i.links_issue,
            modifies_tests: i.modifies_tests,
        })
    }
}

/// Title and body separated by a blank line; markdown is kept verbatim.
pub fn issue_text_from(title: &str, body: &str) -> String {
    match (title.is_empty(), body.is_empty()) {
        (false, false) => format!("{title}\n\n{body}"),
        (false, true) => title.to_string(),
        _ => body.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub repo_id: String,
    pub pr_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationInstance {
    pub instance_id: String,
    pub query_text: String,
    pub positive_unit: CodeUnit,
    /// Unmodified functions of the snapshot; shared between the instances
    /// of one PR.
    pub candidate_pool: Arc<Vec<CodeUnit>>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTriple {
    pub instance_id: String,
    pub query_text: String,
    pub positive: CodeUnit,
    pub negatives: Vec<CodeUnit>,
    pub provenance: Provenance,
    /// Pool the negatives were drawn from; kept in memory for re-mining.
    #[serde(skip)]
    pub pool: Option<Arc<Vec<CodeUnit>>>,
}

/// Keeps PRs that resolve a linked issue and touch tests.
pub fn select_pull_requests(records: &[PullRequestRecord]) -> Vec<PullRequestRecord> {
    records
        .iter()
        .filter(|r| r.links_issue && r.modifies_tests)
        .cloned()
        .collect()
}

/// Units whose span intersects a removed base line, or that contain both
/// neighbours of an insertion point. Test files are excluded. Result is in
/// the order of `units`.
pub fn map_diff_to_units(record: &PullRequestRecord, units: &[CodeUnit]) -> Result<Vec<CodeUnit>> {
    let files = diff::parse_unified_diff(&record.diff_text)?;
    if files.iter().all(|f| f.hunks.is_empty()) {
        return Err(Error::DiffParse {
            header: format!("PR {}", record.pr_id),
            message: "diff contains no hunks".into(),
        });
    }

    let mut by_file: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, u) in units.iter().enumerate() {
        by_file.entry(u.file_path.as_str()).or_default().push(i);
    }

    let mut hit = BTreeSet::new();
    for file in &files {
        let Some(path) = file.base_path() else { continue };
        if diff::is_test_path(path) {
            continue;
        }
        let Some(candidates) = by_file.get(path) else { continue };
        for hunk in &file.hunks {
            for &i in candidates {
                let span = units[i].span;
                let removed = hunk.removed_lines.iter().any(|&l| span.contains(l));
                let inserted = hunk
                    .insertions_after
                    .iter()
                    .any(|&l| span.contains(l) && span.contains(l + 1));
                if removed || inserted {
                    hit.insert(i);
                }
            }
        }
    }
    Ok(hit.into_iter().map(|i| units[i].clone()).collect())
}

/// One instance per modified function. Every instance's pool excludes all
/// of the PR's modified functions.
pub fn build_instances(record: &PullRequestRecord, units: &[CodeUnit]) -> Result<Vec<LocalizationInstance>> {
    let modified = map_diff_to_units(record, units)?;
    if modified.is_empty() {
        return Err(Error::InvalidInstance(format!(
            "PR {} modifies no existing non-test function",
            record.pr_id
        )));
    }
    let modified_ids: HashSet<&str> = modified.iter().map(|u| u.unit_id.as_str()).collect();
    let pool: Arc<Vec<CodeUnit>> = Arc::new(
        units
            .iter()
            .filter(|u| !modified_ids.contains(u.unit_id.as_str()))
            .cloned()
            .collect(),
    );
    if pool.is_empty() {
        return Err(Error::InvalidInstance(format!(
            "PR {} leaves no unmodified functions for the candidate pool",
            record.pr_id
        )));
    }
    let provenance = Provenance {
        repo_id: record.repo_id.clone(),
        pr_id: record.pr_id.clone(),
    };
    Ok(modified
        .into_iter()
        .map(|positive| LocalizationInstance {
            instance_id: format!("{}/{}::{}", record.repo_id, record.pr_id, positive.qualified_name),
            query_text: record.issue_text.clone(),
            positive_unit: positive,
            candidate_pool: Arc::clone(&pool),
            provenance: provenance.clone(),
        })
        .collect())
}

/// Query similarities of an instance's positive and pool units.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceScores {
    pub positive: f64,
    /// Aligned with `candidate_pool`.
    pub pool: Vec<f64>,
}

/// Embeds queries and units, memoizing unit embeddings by `unit_id`.
pub struct SimilarityScorer<'a> {
    embedder: &'a Embedder,
    cache: HashMap<String, EmbeddingVector>,
}

impl<'a> SimilarityScorer<'a> {
    pub fn new(embedder: &'a Embedder) -> Self {
        Self {
            embedder,
            cache: HashMap::new(),
        }
    }

    fn ensure(&mut self, units: &[&CodeUnit]) -> Result<()> {
        let mut seen = HashSet::new();
        let missing: Vec<&CodeUnit> = units
            .iter()
            .copied()
            .filter(|u| !self.cache.contains_key(&u.unit_id) && seen.insert(u.unit_id.as_str()))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let texts: Vec<&str> = missing.iter().map(|u| u.source_text.as_str()).collect();
        let vecs = self.embedder.documents(&texts)?;
        for (u, v) in missing.into_iter().zip(vecs) {
            self.cache.insert(u.unit_id.clone(), v);
        }
        Ok(())
    }

    pub fn score(&mut self, query_text: &str, positive: &CodeUnit, pool: &[CodeUnit]) -> Result<InstanceScores> {
        let q = self.embedder.query(query_text)?;
        let mut all: Vec<&CodeUnit> = Vec::with_capacity(pool.len() + 1);
        all.push(positive);
        all.extend(pool.iter());
        self.ensure(&all)?;
        let sim = |u: &CodeUnit| q.dot(&self.cache[&u.unit_id]);
        Ok(InstanceScores {
            positive: sim(positive),
            pool: pool.iter().map(sim).collect(),
        })
    }

    pub fn score_instance(&mut self, instance: &LocalizationInstance) -> Result<InstanceScores> {
        self.score(&instance.query_text, &instance.positive_unit, &instance.candidate_pool)
    }
}

fn beats(score_a: f64, id_a: &str, score_b: f64, id_b: &str) -> bool {
    match score_a.partial_cmp(&score_b) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => id_a < id_b,
        _ => false,
    }
}

/// 1-based rank of the positive among positive plus pool; ties go to the
/// smaller unit id.
pub fn positive_rank(positive: &CodeUnit, pool: &[CodeUnit], scores: &InstanceScores) -> usize {
    1 + pool
        .iter()
        .zip(&scores.pool)
        .filter(|(u, &s)| beats(s, &u.unit_id, scores.positive, &positive.unit_id))
        .count()
}

/// True when the positive ranks within the top `k` by query similarity.
pub fn consistency_filter(instance: &LocalizationInstance, embedder: &Embedder, k: usize) -> Result<bool> {
    if k == 0 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    let scores = SimilarityScorer::new(embedder).score_instance(instance)?;
    Ok(positive_rank(&instance.positive_unit, &instance.candidate_pool, &scores) <= k)
}

/// Indices of the `m` most similar pool units, most similar first.
pub fn top_m_indices(pool: &[CodeUnit], scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| pool[a].unit_id.cmp(&pool[b].unit_id))
    });
    order.truncate(m);
    order
}

fn triple_from(
    instance_id: &str,
    query_text: &str,
    positive: &CodeUnit,
    pool: &Arc<Vec<CodeUnit>>,
    provenance: &Provenance,
    scores: &InstanceScores,
    m: usize,
) -> Result<TrainingTriple> {
    if m == 0 {
        return Err(Error::InvalidInput("M must be >= 1".into()));
    }
    if pool.is_empty() {
        return Err(Error::InvalidInstance(format!("{instance_id} has an empty pool")));
    }
    let negatives = top_m_indices(pool, &scores.pool, m)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect();
    Ok(TrainingTriple {
        instance_id: instance_id.to_string(),
        query_text: query_text.to_string(),
        positive: positive.clone(),
        negatives,
        provenance: provenance.clone(),
        pool: Some(Arc::clone(pool)),
    })
}

pub fn select_hard_negatives(
    instance: &LocalizationInstance,
    scores: &InstanceScores,
    m: usize,
) -> Result<TrainingTriple> {
    triple_from(
        &instance.instance_id,
        &instance.query_text,
        &instance.positive_unit,
        &instance.candidate_pool,
        &instance.provenance,
        scores,
        m,
    )
}

/// The `min(m, |pool|)` pool units most similar to the query.
pub fn mine_hard_negatives(instance: &LocalizationInstance, embedder: &Embedder, m: usize) -> Result<TrainingTriple> {
    if instance.candidate_pool.is_empty() {
        return Err(Error::InvalidInstance(format!(
            "{} has an empty pool",
            instance.instance_id
        )));
    }
    let scores = SimilarityScorer::new(embedder).score_instance(instance)?;
    select_hard_negatives(instance, &scores, m)
}

/// Re-mines every triple's negatives from its original pool with a new
/// embedder. Output is aligned with the input.
pub fn iterative_mine(triples: &[TrainingTriple], embedder_next: &Embedder, m: usize) -> Result<Vec<TrainingTriple>> {
    let mut scorer = SimilarityScorer::new(embedder_next);
    triples
        .iter()
        .map(|t| {
            let pool = t.pool.as_ref().ok_or_else(|| {
                Error::InvalidInput(format!("triple {} has no pool reference", t.instance_id))
            })?;
            let scores = scorer.score(&t.query_text, &t.positive, pool)?;
            triple_from(&t.instance_id, &t.query_text, &t.positive, pool, &t.provenance, &scores, m)
        })
        .collect()
}

/// Reattaches pools from the instances a set of deserialized triples came from.
pub fn attach_pools(triples: &mut [TrainingTriple], instances: &[LocalizationInstance]) -> Result<()> {
    let by_id: HashMap<&str, &LocalizationInstance> =
        instances.iter().map(|i| (i.instance_id.as_str(), i)).collect();
    for t in triples {
        let inst = by_id.get(t.instance_id.as_str()).ok_or_else(|| {
            Error::InvalidInput(format!("no instance {} to take the pool from", t.instance_id))
        })?;
        t.pool = Some(Arc::clone(&inst.candidate_pool));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationParams {
    /// `None` disables consistency filtering.
    pub consistency_k: Option<usize>,
    pub hard_negatives: usize,
}

impl Default for CurationParams {
    fn default() -> Self {
        Self {
            consistency_k: Some(DEFAULT_CONSISTENCY_K),
            hard_negatives: DEFAULT_HARD_NEGATIVES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub pr_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CurationOutcome {
    /// All instances built, before filtering.
    pub instances: Vec<LocalizationInstance>,
    pub triples: Vec<TrainingTriple>,
    pub skipped_records: Vec<SkippedRecord>,
    /// Records that produced instances, with their modified-unit sets.
    pub modified_per_record: Vec<(PullRequestRecord, Vec<CodeUnit>)>,
    pub filtered_out: usize,
}

/// Runs selection, instance construction, filtering and mining for PRs whose
/// snapshots `units_for` can resolve. Output order follows input order.
pub fn curate<'u, F>(
    records: &[PullRequestRecord],
    units_for: F,
    embedder: &Embedder,
    params: CurationParams,
) -> Result<CurationOutcome>
where
    F: Fn(&str, &str) -> Option<&'u [CodeUnit]>,
{
    let mut out = CurationOutcome::default();
    let mut scorer = SimilarityScorer::new(embedder);
    for record in select_pull_requests(records) {
        let Some(units) = units_for(&record.repo_id, &record.base_commit_ref) else {
            out.skipped_records.push(SkippedRecord {
                pr_id: record.pr_id.clone(),
                reason: format!(
                    "no snapshot for {}@{}",
                    record.repo_id, record.base_commit_ref
                ),
            });
            continue;
        };
        let instances = match build_instances(&record, units) {
            Ok(i) => i,
            Err(e @ (Error::InvalidInstance(_) | Error::DiffParse { .. })) => {
                out.skipped_records.push(SkippedRecord {
                    pr_id: record.pr_id.clone(),
                    reason: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(e),
        };
        for inst in &instances {
            let scores = scorer.score_instance(inst)?;
            let keep = match params.consistency_k {
                None => true,
                Some(k) => positive_rank(&inst.positive_unit, &inst.candidate_pool, &scores) <= k,
            };
            if keep {
                out.triples
                    .push(select_hard_negatives(inst, &scores, params.hard_negatives)?);
            } else {
                out.filtered_out += 1;
            }
        }
        let modified = instances.iter().map(|i| i.positive_unit.clone()).collect();
        out.modified_per_record.push((record, modified));
        out.instances.extend(instances);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::Span;

    fn unit(name: &str, start: usize, end: usize, text: &str) -> CodeUnit {
        CodeUnit {
            unit_id: format!("id-{name}"),
            file_path: "a.py".into(),
            module_path: vec![],
            function_name: name.into(),
            qualified_name: format!("a.py::{name}"),
            span: Span { start, end },
            source_text: text.into(),
        }
    }

    fn record(diff: &str) -> PullRequestRecord {
        PullRequestRecord {
            pr_id: "pr1".into(),
            repo_id: "r".into(),
            base_commit_ref: "c".into(),
            issue_text: "save fails".into(),
            diff_text: diff.into(),
            links_issue: true,
            modifies_tests: true,
        }
    }

    #[test]
    fn pr_selection() {
        let mut a = record("");
        a.modifies_tests = false;
        let b = record("");
        let kept = select_pull_requests(&[a, b.clone()]);
        assert_eq!(kept, vec![b]);
        assert!(select_pull_requests(&[]).is_empty());
    }

    #[test]
    fn deletion_maps_to_enclosing_function() {
        let units = vec![unit("f", 3, 8, "def f"), unit("g", 10, 12, "def g")];
        let d = "--- a/a.py\n+++ b/a.py\n@@ -4,3 +4,2 @@\n l4\n-l5\n l6\n";
        let hit = map_diff_to_units(&record(d), &units).unwrap();
        assert_eq!(hit.len(), 1);
        assert_eq!(hit[0].qualified_name, "a.py::f");
    }

    #[test]
    fn import_only_hunk_maps_to_nothing() {
        let units = vec![unit("f", 3, 8, "def f")];
        let d = "--- a/a.py\n+++ b/a.py\n@@ -1,1 +1,1 @@\n-import os\n+import sys\n";
        assert!(map_diff_to_units(&record(d), &units).unwrap().is_empty());
        assert!(matches!(build_instances(&record(d), &units), Err(Error::InvalidInstance(_))));
    }

    #[test]
    fn insertion_after_function_end_is_not_a_modification() {
        let units = vec![unit("f", 1, 2, "def f"), unit("g", 5, 6, "def g")];
        let append = "--- a/a.py\n+++ b/a.py\n@@ -2,0 +3,3 @@\n+\n+def h():\n+    pass\n";
        assert!(map_diff_to_units(&record(append), &units).unwrap().is_empty());
        let inside = "--- a/a.py\n+++ b/a.py\n@@ -5,0 +6,1 @@\n+    x = 1\n";
        let hit = map_diff_to_units(&record(inside), &units).unwrap();
        assert_eq!(hit[0].function_name, "g");
    }

    #[test]
    fn pools_exclude_every_modified_unit() {
        let units: Vec<CodeUnit> = (0..50)
            .map(|i| unit(&format!("u{i}"), i * 3 + 1, i * 3 + 2, "x"))
            .collect();
        let one = "--- a/a.py\n+++ b/a.py\n@@ -1,1 +1,1 @@\n-a\n+b\n";
        let inst = build_instances(&record(one), &units).unwrap();
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].candidate_pool.len(), 49);

        let two = "--- a/a.py\n+++ b/a.py\n@@ -1,1 +1,1 @@\n-a\n+b\n@@ -4,1 +4,1 @@\n-a\n+b\n";
        let inst = build_instances(&record(two), &units).unwrap();
        assert_eq!(inst.len(), 2);
        for i in &inst {
            assert_eq!(i.candidate_pool.len(), 48);
            assert!(i.candidate_pool.iter().all(|u| u.unit_id != "id-u0" && u.unit_id != "id-u1"));
        }
    }

    #[test]
    fn rank_boundaries_and_ties() {
        let pos = unit("p", 1, 1, "");
        let pool: Vec<CodeUnit> = (0..25).map(|i| unit(&format!("n{i:02}"), 1, 1, "")).collect();
        // 19 pool units strictly above -> rank 20.
        let mut s: Vec<f64> = (0..25).map(|i| if i < 19 { 0.9 } else { 0.1 }).collect();
        let scores = InstanceScores { positive: 0.5, pool: s.clone() };
        assert_eq!(positive_rank(&pos, &pool, &scores), 20);
        s[19] = 0.9;
        let scores = InstanceScores { positive: 0.5, pool: s };
        assert_eq!(positive_rank(&pos, &pool, &scores), 21);

        // "id-n.." < "id-p": pool wins ties.
        let tie = InstanceScores { positive: 0.5, pool: vec![0.5; 25] };
        assert_eq!(positive_rank(&pos, &pool, &tie), 26);
    }

    #[test]
    fn mining_keeps_smaller_id_at_tie_boundary() {
        let pool: Vec<CodeUnit> = ["c", "b", "a"].iter().map(|n| unit(n, 1, 1, "")).collect();
        let order = top_m_indices(&pool, &[0.9, 0.5, 0.5], 2);
        assert_eq!(order, vec![0, 2]);
    }

    #[test]
    fn small_pool_returns_everything() {
        let e = Embedder::hash(32, 0).unwrap();
        let units: Vec<CodeUnit> = (0..11)
            .map(|i| unit(&format!("u{i}"), i * 3 + 1, i * 3 + 2, &format!("def u{i} save file {i}")))
            .collect();
        let d = "--- a/a.py\n+++ b/a.py\n@@ -1,1 +1,1 @@\n-a\n+b\n";
        let inst = build_instances(&record(d), &units).unwrap().remove(0);
        let t = mine_hard_negatives(&inst, &e, 15).unwrap();
        assert_eq!(t.negatives.len(), 10);
        let again = iterative_mine(&[t.clone()], &e, 15).unwrap();
        assert_eq!(again[0].negatives, t.negatives);
        let mut orphan = t.clone();
        orphan.pool = None;
        assert!(matches!(iterative_mine(&[orphan], &e, 15), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn title_body_join() {
        assert_eq!(issue_text_from("Crash", "Steps:\n1."), "Crash\n\nSteps:\n1.");
        let json = r#"{"pr_id":"1","repo_id":"r","base_commit_ref":"c","issue_title":"T","issue_body":"B","diff_text":"","links_issue":true,"modifies_tests":true}"#;
        let r: PullRequestRecord = serde_json::from_str(json).unwrap();
        assert_eq!(r.issue_text, "T\n\nB");
        let bad = r#"{"pr_id":"1","repo_id":"r","base_commit_ref":"c","diff_text":"","links_issue":true,"modifies_tests":true}"#;
        assert!(serde_json::from_str::<PullRequestRecord>(bad).is_err());
    }
}
