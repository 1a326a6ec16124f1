//! Multi-granularity Acc@k scoring, stratified breakdowns and cost accounting.

mod cost;
mod overlap;
pub mod render;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{RankedEntry, RankedList};
use crate::error::{Error, Result};
use crate::units::CodeUnit;

pub use cost::{cost_report, CostReport, InstanceCost, Prices, UsageEntry, UsageLedger};
pub use overlap::{
    overlap_buckets, rouge1, rouge1_scores, semantic_overlap, stratify_by_bucket, BucketAssignment, Rouge1Scores,
    RougeVariant, LEXICAL_EDGES, SEMANTIC_EDGES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    File,
    Module,
    Function,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::File, Granularity::Module, Granularity::Function];

    pub fn key(self, unit: &CodeUnit) -> String {
        match self {
            Granularity::File => unit.file_path.clone(),
            Granularity::Module => unit.module_key(),
            Granularity::Function => unit.unit_id.clone(),
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Granularity::File => "file",
            Granularity::Module => "module",
            Granularity::Function => "function",
        })
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "file" => Ok(Granularity::File),
            "module" => Ok(Granularity::Module),
            "function" => Ok(Granularity::Function),
            other => Err(Error::Config(format!("unknown granularity {other:?}"))),
        }
    }
}

pub type UnitLookup<'a> = HashMap<&'a str, &'a CodeUnit>;

pub fn unit_lookup(units: &[CodeUnit]) -> UnitLookup<'_> {
    units.iter().map(|u| (u.unit_id.as_str(), u)).collect()
}

fn resolve<'a>(lookup: &UnitLookup<'a>, id: &str) -> Result<&'a CodeUnit> {
    lookup
        .get(id)
        .copied()
        .ok_or_else(|| Error::Integrity(format!("ranked id {id} does not resolve to a unit")))
}

/// Collapses a function ranking to files or modules. A group scores the max
/// of its members; groups sort by score descending, then key ascending.
/// Function granularity returns the list unchanged after resolving ids.
pub fn aggregate_granularity(ranked: &RankedList, lookup: &UnitLookup<'_>, granularity: Granularity) -> Result<RankedList> {
    let mut best: HashMap<String, f64> = HashMap::new();
    for e in &ranked.entries {
        let unit = resolve(lookup, &e.unit_id)?;
        if granularity == Granularity::Function {
            continue;
        }
        let slot = best.entry(granularity.key(unit)).or_insert(f64::NEG_INFINITY);
        if e.score > *slot {
            *slot = e.score;
        }
    }
    if granularity == Granularity::Function {
        return Ok(ranked.clone());
    }
    let mut out = RankedList::new(
        ranked.query_id.clone(),
        best.into_iter()
            .map(|(unit_id, score)| RankedEntry { unit_id, score })
            .collect(),
    );
    out.sort();
    Ok(out)
}

/// True iff every gold id is among the first `min(k, len)` ranked ids.
pub fn acc_at_k<S: AsRef<str>>(ranked: &[S], gold: &BTreeSet<String>, k: usize) -> Result<bool> {
    if gold.is_empty() {
        return Err(Error::InvalidInstance("gold set is empty".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("k must be >= 1".into()));
    }
    let head: BTreeSet<&str> = ranked.iter().take(k).map(AsRef::as_ref).collect();
    Ok(gold.iter().all(|g| head.contains(g.as_str())))
}

/// One benchmark line on disk; golds are qualified names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub instance_id: String,
    pub query_text: String,
    #[serde(default)]
    pub gold_functions: Vec<String>,
    pub repo_id: String,
    pub commit_ref: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub instance_id: String,
    pub query_text: String,
    pub gold_function_ids: BTreeSet<String>,
    pub gold_file_set: BTreeSet<String>,
    pub gold_module_set: BTreeSet<String>,
    pub repo_id: String,
    pub commit_ref: String,
}

impl BenchmarkInstance {
    /// Derives the file and module sets from the gold functions.
    pub fn from_gold_units(
        instance_id: impl Into<String>,
        query_text: impl Into<String>,
        gold: &[&CodeUnit],
        repo_id: impl Into<String>,
        commit_ref: impl Into<String>,
    ) -> Result<Self> {
        let instance_id = instance_id.into();
        if gold.is_empty() {
            return Err(Error::InvalidInstance(format!("{instance_id} has no gold functions")));
        }
        Ok(Self {
            gold_function_ids: gold.iter().map(|u| u.unit_id.clone()).collect(),
            gold_file_set: gold.iter().map(|u| Granularity::File.key(u)).collect(),
            gold_module_set: gold.iter().map(|u| Granularity::Module.key(u)).collect(),
            instance_id,
            query_text: query_text.into(),
            repo_id: repo_id.into(),
            commit_ref: commit_ref.into(),
        })
    }

    pub fn gold(&self, granularity: Granularity) -> &BTreeSet<String> {
        match granularity {
            Granularity::File => &self.gold_file_set,
            Granularity::Module => &self.gold_module_set,
            Granularity::Function => &self.gold_function_ids,
        }
    }

    pub fn num_gold(&self) -> usize {
        self.gold_function_ids.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedInstance {
    pub instance_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadedBenchmark {
    pub instances: Vec<BenchmarkInstance>,
    pub excluded: Vec<ExcludedInstance>,
    /// Gold names that did not resolve in otherwise retained instances.
    pub dropped_golds: usize,
}

/// Resolves gold names against the snapshot's units. Golds with no unit in
/// the base snapshot are new functions; an instance left with none is
/// excluded.
pub fn load_benchmark<'u, F>(records: &[BenchmarkRecord], units_for: F) -> LoadedBenchmark
where
    F: Fn(&str, &str) -> Option<&'u [CodeUnit]>,
{
    let mut out = LoadedBenchmark::default();
    for r in records {
        let Some(units) = units_for(&r.repo_id, &r.commit_ref) else {
            out.excluded.push(ExcludedInstance {
                instance_id: r.instance_id.clone(),
                reason: format!("no unit inventory for {}@{}", r.repo_id, r.commit_ref),
            });
            continue;
        };
        let by_name: HashMap<&str, &CodeUnit> = units.iter().map(|u| (u.qualified_name.as_str(), u)).collect();
        let mut gold: Vec<&CodeUnit> = Vec::new();
        let mut unresolved = 0;
        for name in &r.gold_functions {
            match by_name.get(name.as_str()) {
                Some(u) if !gold.iter().any(|g| g.unit_id == u.unit_id) => gold.push(u),
                Some(_) => {}
                None => unresolved += 1,
            }
        }
        if gold.is_empty() {
            out.excluded.push(ExcludedInstance {
                instance_id: r.instance_id.clone(),
                reason: "no gold function exists in the base snapshot".into(),
            });
            continue;
        }
        out.dropped_golds += unresolved;
        out.instances.push(
            BenchmarkInstance::from_gold_units(&r.instance_id, &r.query_text, &gold, &r.repo_id, &r.commit_ref)
                .expect("gold is non-empty"),
        );
    }
    out
}

/// Cutoffs evaluated per granularity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KSchedule(pub BTreeMap<Granularity, Vec<usize>>);

pub const MAX_K: usize = 100;

impl Default for KSchedule {
    fn default() -> Self {
        Self(BTreeMap::from([
            (Granularity::File, vec![1, 3, 5]),
            (Granularity::Module, vec![5, 10]),
            (Granularity::Function, vec![5, 10]),
        ]))
    }
}

impl KSchedule {
    /// The same cutoffs at every granularity.
    pub fn uniform(ks: &[usize]) -> Self {
        Self(Granularity::ALL.iter().map(|g| (*g, ks.to_vec())).collect())
    }

    pub fn validate(&self) -> Result<()> {
        for ks in self.0.values() {
            if let Some(k) = ks.iter().find(|k| **k == 0 || **k > MAX_K) {
                return Err(Error::Config(format!("k={k} outside 1..={MAX_K}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub instance_id: String,
    pub num_gold: usize,
    pub success: BTreeMap<Granularity, BTreeMap<usize, bool>>,
}

/// Acc@k in percent, rounded to two decimals.
pub type AccTable = BTreeMap<Granularity, BTreeMap<usize, f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub instance_count: usize,
    pub table: AccTable,
    pub instances: Vec<InstanceResult>,
}

pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn percent(successes: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        round2(successes as f64 * 100.0 / total as f64)
    }
}

fn table_for(results: &[&InstanceResult], schedule: &KSchedule) -> AccTable {
    schedule
        .0
        .iter()
        .map(|(g, ks)| {
            let row = ks
                .iter()
                .map(|k| {
                    let hits = results.iter().filter(|r| r.success[g][k]).count();
                    (*k, percent(hits, results.len()))
                })
                .collect();
            (*g, row)
        })
        .collect()
}

/// Scores one function-level ranked list per instance.
pub fn evaluate(
    benchmark: &[BenchmarkInstance],
    ranked_lists: &HashMap<String, RankedList>,
    lookup: &UnitLookup<'_>,
    schedule: &KSchedule,
) -> Result<EvalReport> {
    schedule.validate()?;
    let missing: Vec<String> = benchmark
        .iter()
        .filter(|b| !ranked_lists.contains_key(&b.instance_id))
        .map(|b| b.instance_id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRun { missing });
    }
    let instances = benchmark
        .par_iter()
        .map(|b| {
            let ranked = &ranked_lists[&b.instance_id];
            let mut success = BTreeMap::new();
            for (g, ks) in &schedule.0 {
                let agg = aggregate_granularity(ranked, lookup, *g)?;
                let ids: Vec<&str> = agg.ids().collect();
                let row = ks
                    .iter()
                    .map(|k| Ok((*k, acc_at_k(&ids, b.gold(*g), *k)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                success.insert(*g, row);
            }
            Ok(InstanceResult {
                instance_id: b.instance_id.clone(),
                num_gold: b.num_gold(),
                success,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&InstanceResult> = instances.iter().collect();
    Ok(EvalReport {
        instance_count: instances.len(),
        table: table_for(&refs, schedule),
        instances,
    })
}

impl EvalReport {
    pub fn schedule(&self) -> KSchedule {
        KSchedule(self.table.iter().map(|(g, row)| (*g, row.keys().copied().collect())).collect())
    }

    /// Acc table over the subset of instances accepted by `keep`.
    pub fn table_where(&self, keep: impl Fn(&InstanceResult) -> bool) -> (usize, AccTable) {
        let subset: Vec<&InstanceResult> = self.instances.iter().filter(|r| keep(r)).collect();
        (subset.len(), table_for(&subset, &self.schedule()))
    }
}

/// Inclusive `num_gold` range; `max: None` is open-ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NumGoldBucket {
    pub min: usize,
    pub max: Option<usize>,
}

impl NumGoldBucket {
    pub fn contains(&self, n: usize) -> bool {
        n >= self.min && self.max.is_none_or(|m| n <= m)
    }

    pub fn label(&self) -> String {
        match self.max {
            None => format!("{}+", self.min),
            Some(m) if m == self.min => m.to_string(),
            Some(m) => format!("{}-{}", self.min, m),
        }
    }
}

pub const DEFAULT_NUM_GOLD_BUCKETS: [NumGoldBucket; 4] = [
    NumGoldBucket { min: 1, max: Some(1) },
    NumGoldBucket { min: 2, max: Some(3) },
    NumGoldBucket { min: 4, max: Some(5) },
    NumGoldBucket { min: 6, max: None },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub count: usize,
    pub table: AccTable,
}

/// Per-bucket Acc tables. Buckets with no instances are left out.
pub fn stratify_by_num_gold(report: &EvalReport, buckets: &[NumGoldBucket]) -> Vec<Stratum> {
    buckets
        .iter()
        .filter_map(|b| {
            let (count, table) = report.table_where(|r| b.contains(r.num_gold));
            (count > 0).then(|| Stratum {
                label: b.label(),
                count,
                table,
            })
        })
        .collect()
}
