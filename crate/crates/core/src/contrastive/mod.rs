//! InfoNCE over in-batch positives plus mined hard negatives, with exact
//! analytic gradients, and a small trainable encoder that exercises it.
//!
//! For query `i` the candidate set is every positive in the batch followed by
//! every hard negative in the batch, so with `N` queries and `M` negatives
//! each there are `N(M+1)` logits `h_i . h_k / tau`. The batch loss is the
//! mean over queries of the softmax cross-entropy at the query's own
//! positive.

mod encoder;
pub mod planted;

use crate::error::{Error, Result};

pub use encoder::{
    toy_encode, train_toy_encoder, LossPoint, ToyEncoder, TrainParams, TrainedEncoder,
};

/// Embeddings for one contrastive step. Negatives may be ragged; every
/// query's denominator still runs over the whole batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<Vec<f64>>>,
}

/// Gradients shaped like the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveGradients {
    pub queries: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub negatives: Vec<Vec<Vec<f64>>>,
}

impl ContrastiveBatch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Checks shapes and finiteness; returns the shared dimension.
    pub fn validate(&self) -> Result<usize> {
        let n = self.queries.len();
        if n == 0 {
            return Err(Error::Config("contrastive batch is empty".into()));
        }
        if self.positives.len() != n || self.negatives.len() != n {
            return Err(Error::Config(format!(
                "batch has {n} queries, {} positives, {} negative sets",
                self.positives.len(),
                self.negatives.len()
            )));
        }
        let dim = self.queries[0].len();
        let all = self
            .queries
            .iter()
            .chain(&self.positives)
            .chain(self.negatives.iter().flatten());
        for v in all {
            if v.len() != dim {
                return Err(Error::Config(format!(
                    "embedding dimension {} differs from {dim}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NumericInput("batch embedding contains NaN or inf".into()));
            }
        }
        Ok(dim)
    }

    /// Positives first, then negatives in query order.
    fn candidates(&self) -> Vec<&[f64]> {
        self.positives
            .iter()
            .map(Vec::as_slice)
            .chain(self.negatives.iter().flatten().map(Vec::as_slice))
            .collect()
    }

    pub fn candidate_count(&self) -> usize {
        self.positives.len() + self.negatives.iter().map(Vec::len).sum::<usize>()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_temperature(t: f64) -> Result<()> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(Error::NumericInput(format!("temperature must be positive, got {t}")))
    }
}

/// Softmax over a row of logits, shifted by the max.
fn softmax(logits: &[f64]) -> (Vec<f64>, f64) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    (exps.into_iter().map(|e| e / sum).collect(), lse)
}

/// `lse - logits[target]`, switching to `ln(1 + x)` when the target is the
/// largest logit so tiny losses keep their relative precision.
fn row_loss(logits: &[f64], target: usize, lse: f64) -> f64 {
    let t = logits[target];
    if logits.iter().any(|&l| l > t) {
        return lse - t;
    }
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != target)
        .map(|(_, l)| (l - t).exp())
        .sum();
    rest.ln_1p()
}

struct Forward {
    loss: f64,
    /// probs[i][k] over candidates.
    probs: Vec<Vec<f64>>,
}

fn forward(batch: &ContrastiveBatch, temperature: f64) -> Result<Forward> {
    batch.validate()?;
    check_temperature(temperature)?;
    let cands = batch.candidates();
    let n = batch.len();
    let mut total = 0.0;
    let mut probs = Vec::with_capacity(n);
    for (i, q) in batch.queries.iter().enumerate() {
        let logits: Vec<f64> = cands.iter().map(|c| dot(q, c) / temperature).collect();
        let (p, lse) = softmax(&logits);
        total += row_loss(&logits, i, lse);
        probs.push(p);
    }
    Ok(Forward {
        loss: total / n as f64,
        probs,
    })
}

pub fn info_nce_loss(batch: &ContrastiveBatch, temperature: f64) -> Result<f64> {
    Ok(forward(batch, temperature)?.loss)
}

/// Per-query gradient of that query's loss term with respect to its raw
/// similarities `h_i . h_k`. Each row sums to zero.
pub fn similarity_gradients(batch: &ContrastiveBatch, temperature: f64) -> Result<Vec<Vec<f64>>> {
    let fw = forward(batch, temperature)?;
    Ok(fw
        .probs
        .into_iter()
        .enumerate()
        .map(|(i, mut row)| {
            row[i] -= 1.0;
            row.iter_mut().for_each(|g| *g /= temperature);
            row
        })
        .collect())
}

pub fn info_nce_loss_and_grad(
    batch: &ContrastiveBatch,
    temperature: f64,
) -> Result<(f64, ContrastiveGradients)> {
    let dim = batch.validate()?;
    let fw = forward(batch, temperature)?;
    let cands = batch.candidates();
    let n = batch.len();
    let scale = 1.0 / (n as f64 * temperature);

    let mut g_query = vec![vec![0.0; dim]; n];
    let mut g_cand = vec![vec![0.0; dim]; cands.len()];
    for i in 0..n {
        for (k, c) in cands.iter().enumerate() {
            let coeff = (fw.probs[i][k] - if k == i { 1.0 } else { 0.0 }) * scale;
            if coeff == 0.0 {
                continue;
            }
            for d in 0..dim {
                g_query[i][d] += coeff * c[d];
                g_cand[k][d] += coeff * batch.queries[i][d];
            }
        }
    }

    let mut rest = g_cand.split_off(n);
    let positives = g_cand;
    let mut negatives = Vec::with_capacity(n);
    for set in &batch.negatives {
        let tail = rest.split_off(set.len());
        negatives.push(rest);
        rest = tail;
    }
    Ok((
        fw.loss,
        ContrastiveGradients {
            queries: g_query,
            positives,
            negatives,
        },
    ))
}

pub fn info_nce_grad(batch: &ContrastiveBatch, temperature: f64) -> Result<ContrastiveGradients> {
    Ok(info_nce_loss_and_grad(batch, temperature)?.1)
}
