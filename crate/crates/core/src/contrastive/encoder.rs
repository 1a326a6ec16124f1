use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::TrainingTriple;
use crate::embed::{hash_features, EmbeddingProvider, EmbeddingVector};
use crate::error::{Error, ProviderError, Result};

use super::{info_nce_loss_and_grad, ContrastiveBatch};

const MAGIC: &[u8; 8] = b"ILTOYENC";

/// Linear map from hashed token features to an embedding, followed by L2
/// normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyEncoder {
    input_features: usize,
    embedding_dim: usize,
    hash_seed: u64,
    /// Row-major, `input_features x embedding_dim`.
    weights: Vec<f64>,
}

impl ToyEncoder {
    pub fn from_weights(
        input_features: usize,
        embedding_dim: usize,
        hash_seed: u64,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if embedding_dim < 8 || input_features == 0 {
            return Err(Error::Config(format!(
                "toy encoder needs embedding_dim >= 8 and input_features >= 1, got {embedding_dim} and {input_features}"
            )));
        }
        if weights.len() != input_features * embedding_dim {
            return Err(Error::Config(format!(
                "expected {} weights, got {}",
                input_features * embedding_dim,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NumericInput("encoder weights must be finite".into()));
        }
        Ok(Self {
            input_features,
            embedding_dim,
            hash_seed,
            weights,
        })
    }

    /// Weights drawn uniformly from `[-a, a]` with `a = sqrt(3 / embedding_dim)`.
    pub fn random(input_features: usize, embedding_dim: usize, hash_seed: u64, init_seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let a = (3.0 / embedding_dim.max(1) as f64).sqrt();
        let weights = (0..input_features * embedding_dim)
            .map(|_| rng.gen_range(-a..=a))
            .collect();
        Self::from_weights(input_features, embedding_dim, hash_seed, weights)
    }

    pub fn input_features(&self) -> usize {
        self.input_features
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn hash_seed(&self) -> u64 {
        self.hash_seed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn sparse_features(&self, text: &str) -> Vec<(usize, f64)> {
        hash_features(text, self.input_features, self.hash_seed)
            .into_iter()
            .enumerate()
            .filter(|(_, v)| *v != 0.0)
            .collect()
    }

    /// Pre-normalization projection `W^T x`.
    fn project(&self, features: &[(usize, f64)]) -> Vec<f64> {
        let d = self.embedding_dim;
        let mut z = vec![0.0; d];
        for &(b, x) in features {
            let row = &self.weights[b * d..(b + 1) * d];
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += x * w;
            }
        }
        z
    }

    fn forward(&self, text: &str) -> Result<Encoded> {
        let features = self.sparse_features(text);
        let z = self.project(&features);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::DegenerateVector(format!(
                "toy encoder produced a zero projection for {:?}",
                truncate_for_error(text)
            )));
        }
        let e = z.iter().map(|v| v / norm).collect();
        Ok(Encoded { features, e, norm })
    }

    /// Unit-norm embedding in 64-bit precision.
    pub fn encode_f64(&self, text: &str) -> Result<Vec<f64>> {
        Ok(self.forward(text)?.e)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.weights.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.input_features as u64).to_le_bytes());
        out.extend_from_slice(&(self.embedding_dim as u64).to_le_bytes());
        out.extend_from_slice(&self.hash_seed.to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 32 || &bytes[..8] != MAGIC {
            return Err(Error::IndexFormat("not a toy encoder file".into()));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + i * 8..16 + i * 8].try_into().expect("8 bytes"));
        let (rows, cols, seed) = (word(0) as usize, word(1) as usize, word(2));
        let body = &bytes[32..];
        if Some(body.len()) != rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) {
            return Err(Error::IndexFormat("toy encoder weight block has the wrong size".into()));
        }
        let weights = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::from_weights(rows, cols, seed, weights)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn truncate_for_error(text: &str) -> String {
    text.chars().take(40).collect()
}

struct Encoded {
    features: Vec<(usize, f64)>,
    e: Vec<f64>,
    norm: f64,
}

/// `normalize(W^T hash_features(text))`.
pub fn toy_encode(encoder: &ToyEncoder, text: &str) -> Result<EmbeddingVector> {
    if crate::text::word_tokens(text).is_empty() {
        return Err(Error::DegenerateText);
    }
    let e = encoder.encode_f64(text)?;
    EmbeddingVector::normalized(e.into_iter().map(|v| v as f32).collect())
}

impl EmbeddingProvider for ToyEncoder {
    fn embed_batch(&self, texts: &[String]) -> std::result::Result<Vec<Vec<f32>>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                toy_encode(self, t)
                    .map(|v| v.values().to_vec())
                    .map_err(|e| ProviderError::Fatal(e.to_string()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Drives the per-epoch shuffle.
    pub seed: u64,
    pub temperature: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 10,
            learning_rate: 0.5,
            batch_size: 16,
            seed: 0,
            temperature: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossPoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedEncoder {
    pub encoder: ToyEncoder,
    pub loss_curve: Vec<LossPoint>,
}

impl TrainedEncoder {
    pub fn loss_curve_csv(&self) -> String {
        let mut out = String::from("step,epoch,loss\n");
        for p in &self.loss_curve {
            out.push_str(&format!("{},{},{:.12}\n", p.step, p.epoch, p.loss));
        }
        out
    }
}

/// Plain minibatch SGD on the InfoNCE loss, back-propagating through the
/// normalization into the weights. Single-threaded; a fixed seed gives
/// bit-identical weights.
pub fn train_toy_encoder(
    triples: &[TrainingTriple],
    initial: &ToyEncoder,
    params: &TrainParams,
) -> Result<TrainedEncoder> {
    if triples.is_empty() {
        return Err(Error::InvalidInput("no training triples".into()));
    }
    if let Some(t) = triples.iter().find(|t| t.negatives.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "triple {} has no negatives",
            t.instance_id
        )));
    }
    if params.batch_size == 0 {
        return Err(Error::InvalidInput("batch_size must be >= 1".into()));
    }
    if !params.learning_rate.is_finite() {
        return Err(Error::NumericInput("learning rate must be finite".into()));
    }

    let mut enc = initial.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut curve = Vec::new();
    let mut step = 0;
    let d = enc.embedding_dim;

    for epoch in 0..params.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(params.batch_size) {
            let mut q = Vec::with_capacity(chunk.len());
            let mut p = Vec::with_capacity(chunk.len());
            let mut n = Vec::with_capacity(chunk.len());
            for &ti in chunk {
                let t = &triples[ti];
                q.push(enc.forward(&t.query_text)?);
                p.push(enc.forward(&t.positive.source_text)?);
                n.push(
                    t.negatives
                        .iter()
                        .map(|u| enc.forward(&u.source_text))
                        .collect::<Result<Vec<_>>>()?,
                );
            }
            let batch = ContrastiveBatch {
                queries: q.iter().map(|e| e.e.clone()).collect(),
                positives: p.iter().map(|e| e.e.clone()).collect(),
                negatives: n.iter().map(|s| s.iter().map(|e| e.e.clone()).collect()).collect(),
            };
            let (loss, grads) = info_nce_loss_and_grad(&batch, params.temperature)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { step, loss });
            }
            curve.push(LossPoint { step, epoch, loss });

            let mut delta = vec![0.0; enc.weights.len()];
            let pairs = q
                .iter()
                .zip(&grads.queries)
                .chain(p.iter().zip(&grads.positives))
                .chain(n.iter().flatten().zip(grads.negatives.iter().flatten()));
            for (encoded, g_e) in pairs {
                accumulate_weight_grad(&mut delta, d, encoded, g_e);
            }
            for (w, g) in enc.weights.iter_mut().zip(&delta) {
                *w -= params.learning_rate * g;
            }
            if enc.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::Divergence { step, loss });
            }
            step += 1;
        }
    }
    Ok(TrainedEncoder {
        encoder: enc,
        loss_curve: curve,
    })
}

/// dL/dW += x (dL/dz)^T with dL/dz = (g - e (e . g)) / |z|.
fn accumulate_weight_grad(delta: &mut [f64], d: usize, enc: &Encoded, g_e: &[f64]) {
    let eg: f64 = enc.e.iter().zip(g_e).map(|(a, b)| a * b).sum();
    let g_z: Vec<f64> = enc
        .e
        .iter()
        .zip(g_e)
        .map(|(e, g)| (g - e * eg) / enc.norm)
        .collect();
    for &(b, x) in &enc.features {
        let row = &mut delta[b * d..(b + 1) * d];
        for (r, gz) in row.iter_mut().zip(&g_z) {
            *r += x * gz;
        }
    }
}
