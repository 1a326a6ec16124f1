use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::text::word_tokens;

use super::{EvalReport, Stratum};

pub const LEXICAL_EDGES: [f64; 5] = [0.0, 0.1, 0.2, 0.3, 1.0];
pub const SEMANTIC_EDGES: [f64; 5] = [0.65, 0.70, 0.75, 0.80, 1.0];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RougeVariant {
    #[default]
    F1,
    Precision,
    Recall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rouge1Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn counts(text: &str) -> Result<(HashMap<String, usize>, usize)> {
    let tokens = word_tokens(text);
    if tokens.is_empty() {
        return Err(Error::DegenerateText);
    }
    let n = tokens.len();
    let mut m = HashMap::new();
    for t in tokens {
        *m.entry(t).or_insert(0) += 1;
    }
    Ok((m, n))
}

/// Clipped unigram overlap; precision is relative to `a`, recall to `b`.
pub fn rouge1_scores(a: &str, b: &str) -> Result<Rouge1Scores> {
    let (ca, na) = counts(a)?;
    let (cb, nb) = counts(b)?;
    let matches: usize = ca.iter().map(|(t, n)| (*n).min(cb.get(t).copied().unwrap_or(0))).sum();
    let precision = matches as f64 / na as f64;
    let recall = matches as f64 / nb as f64;
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(Rouge1Scores { precision, recall, f1 })
}

pub fn rouge1(a: &str, b: &str, variant: RougeVariant) -> Result<f64> {
    let s = rouge1_scores(a, b)?;
    Ok(match variant {
        RougeVariant::F1 => s.f1,
        RougeVariant::Precision => s.precision,
        RougeVariant::Recall => s.recall,
    })
}

/// Mean cosine between the query and each gold text, embedded without
/// prefixes.
pub fn semantic_overlap(embedder: &Embedder, query_text: &str, gold_texts: &[&str]) -> Result<f64> {
    if gold_texts.is_empty() {
        return Err(Error::InvalidInstance("no gold texts".into()));
    }
    let q = embedder.raw(&[query_text])?.remove(0);
    let golds = embedder.raw(gold_texts)?;
    Ok(golds.iter().map(|g| q.dot(g)).sum::<f64>() / golds.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketAssignment {
    /// 1-based bucket per score.
    pub buckets: Vec<usize>,
    /// Scores outside the outermost edges, moved to the nearest bucket.
    pub clamped: usize,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(Error::Config(format!("bucket edges must be finite and strictly increasing: {edges:?}")));
    }
    Ok(())
}

fn bucket_of(score: f64, edges: &[f64]) -> (usize, bool) {
    let n = edges.len() - 1;
    if score.is_nan() || score < edges[0] {
        return (1, true);
    }
    if score > edges[n] {
        return (n, true);
    }
    // Half-open [e_i, e_{i+1}); the last interval also takes its upper edge.
    let i = edges[1..n].iter().take_while(|e| score >= **e).count();
    (i + 1, false)
}

pub fn overlap_buckets(scores: &[f64], edges: &[f64]) -> Result<BucketAssignment> {
    check_edges(edges)?;
    let mut clamped = 0;
    let buckets = scores
        .iter()
        .map(|s| {
            let (b, c) = bucket_of(*s, edges);
            clamped += c as usize;
            b
        })
        .collect();
    if clamped > 0 {
        log::warn!("{clamped} overlap scores fell outside [{}, {}]", edges[0], edges[edges.len() - 1]);
    }
    Ok(BucketAssignment { buckets, clamped })
}

/// Acc tables per overlap bucket; `scores` maps instance ids to an overlap
/// score. Empty buckets are left out.
pub fn stratify_by_bucket(
    report: &EvalReport,
    scores: &BTreeMap<String, f64>,
    edges: &[f64],
) -> Result<(Vec<Stratum>, usize)> {
    let ids: Vec<&String> = report.instances.iter().map(|r| &r.instance_id).collect();
    let missing: Vec<String> = ids.iter().filter(|i| !scores.contains_key(**i)).map(|i| i.to_string()).collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRun { missing });
    }
    let values: Vec<f64> = ids.iter().map(|i| scores[*i]).collect();
    let assignment = overlap_buckets(&values, edges)?;
    let by_id: HashMap<&str, usize> = ids.iter().map(|i| i.as_str()).zip(assignment.buckets.iter().copied()).collect();
    let n = edges.len() - 1;
    let strata = (1..=n)
        .filter_map(|b| {
            let (count, table) = report.table_where(|r| by_id[r.instance_id.as_str()] == b);
            let close = if b == n { "]" } else { ")" };
            (count > 0).then(|| Stratum {
                label: format!("[{}, {}{close}", edges[b - 1], edges[b]),
                count,
                table,
            })
        })
        .collect();
    Ok((strata, assignment.clamped))
}
