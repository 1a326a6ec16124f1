//! Run configuration: one TOML file with `section.key` entries, overridable
//! from the command line. Credentials never live here; remote providers
//! read them from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::corpus::{CurationParams, DEFAULT_CONSISTENCY_K, DEFAULT_HARD_NEGATIVES};
use crate::error::{Error, Result};
use crate::eval::{overlap_buckets, Prices, RougeVariant, LEXICAL_EDGES, SEMANTIC_EDGES};
use crate::rerank::{
    PromptBudget, RerankOptions, DEFAULT_INSTRUCTION, DEFAULT_PER_CANDIDATE_TOKENS, DEFAULT_STRIDE,
    DEFAULT_TOTAL_TOKENS, DEFAULT_WINDOW_SIZE,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub embedding: EmbeddingConfig,
    pub completion: CompletionConfig,
    pub pipeline: PipelineConfig,
    pub budget: BudgetConfig,
    pub prices: Prices,
    pub eval: EvalConfig,
    pub paths: PathsConfig,
    pub seeds: SeedsConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub rouge_variant: RougeVariant,
    pub lexical_edges: Vec<f64>,
    pub semantic_edges: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            rouge_variant: RougeVariant::F1,
            lexical_edges: LEXICAL_EDGES.to_vec(),
            semantic_edges: SEMANTIC_EDGES.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// `hash` or `remote`.
    pub provider: String,
    pub dimension: usize,
    pub model: String,
    pub query_prefix: String,
    pub document_prefix: String,
    pub max_input_tokens: usize,
    pub max_batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompletionConfig {
    /// `identity`, `reverse`, `oracle` or `remote`.
    pub provider: String,
    pub model: String,
    pub retries: usize,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConsistencyK(pub Option<usize>);

impl Serialize for ConsistencyK {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            Some(k) => s.serialize_u64(k as u64),
            None => s.serialize_str("none"),
        }
    }
}

impl<'de> Deserialize<'de> for ConsistencyK {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Raw::deserialize(d)? {
            Raw::N(n) => Ok(ConsistencyK(Some(n as usize))),
            Raw::S(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl std::str::FromStr for ConsistencyK {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("none") {
            return Ok(ConsistencyK(None));
        }
        s.parse::<usize>()
            .map(|k| ConsistencyK(Some(k)))
            .map_err(|_| format!("expected a positive integer or \"none\", got {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub k: ConsistencyK,
    pub m: usize,
    pub window_size: usize,
    pub stride: usize,
    pub top_k: usize,
    pub rerank_depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    pub per_candidate_tokens: usize,
    pub total_tokens: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub benchmark: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedsConfig {
    pub root: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            provider: "hash".into(),
            dimension: 256,
            model: String::new(),
            query_prefix: String::new(),
            document_prefix: String::new(),
            max_input_tokens: 8192,
            max_batch_size: 32,
        }
    }
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            provider: "identity".into(),
            model: String::new(),
            retries: 2,
            timeout_secs: 120,
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: ConsistencyK(Some(DEFAULT_CONSISTENCY_K)),
            m: DEFAULT_HARD_NEGATIVES,
            window_size: DEFAULT_WINDOW_SIZE,
            stride: DEFAULT_STRIDE,
            top_k: 100,
            rerank_depth: 100,
        }
    }
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            per_candidate_tokens: DEFAULT_PER_CANDIDATE_TOKENS,
            total_tokens: DEFAULT_TOTAL_TOKENS,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            embedding: EmbeddingConfig::default(),
            completion: CompletionConfig::default(),
            pipeline: PipelineConfig::default(),
            budget: BudgetConfig::default(),
            prices: Prices::default(),
            eval: EvalConfig::default(),
            paths: PathsConfig::default(),
            seeds: SeedsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.pipeline.k.0 == Some(0) {
            return Err(Error::Config("pipeline.k must be >= 1 or \"none\"".into()));
        }
        let p = &self.pipeline;
        if p.window_size < 2 || p.stride == 0 || p.stride > p.window_size {
            return Err(Error::Config(format!(
                "need window_size >= 2 and 1 <= stride <= window_size, got {} / {}",
                p.window_size, p.stride
            )));
        }
        if p.top_k == 0 {
            return Err(Error::Config("pipeline.top_k must be >= 1".into()));
        }
        self.budget()?;
        self.prices.validate()?;
        overlap_buckets(&[], &self.eval.lexical_edges)?;
        overlap_buckets(&[], &self.eval.semantic_edges)?;
        match self.embedding.provider.as_str() {
            "hash" | "remote" => {}
            other => return Err(Error::Config(format!("unknown embedding.provider {other:?}"))),
        }
        match self.completion.provider.as_str() {
            "identity" | "reverse" | "oracle" | "remote" => {}
            other => return Err(Error::Config(format!("unknown completion.provider {other:?}"))),
        }
        Ok(())
    }

    pub fn curation_params(&self) -> CurationParams {
        CurationParams {
            consistency_k: self.pipeline.k.0,
            hard_negatives: self.pipeline.m,
        }
    }

    pub fn budget(&self) -> Result<PromptBudget> {
        PromptBudget::new(self.budget.per_candidate_tokens, self.budget.total_tokens)
    }

    pub fn rerank_options(&self) -> RerankOptions {
        RerankOptions {
            window_size: self.pipeline.window_size,
            stride: self.pipeline.stride,
            retries: self.completion.retries,
            instruction: DEFAULT_INSTRUCTION.to_string(),
            max_output_tokens: None,
        }
    }

    /// Seed for a named consumer, derived from the root seed.
    pub fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seeds.root, label)
    }
}

pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
