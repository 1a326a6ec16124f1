//! Retrieve-and-rerank toolkit for software issue localization.
//!
//! The crate covers the whole pipeline: extracting function-level code units
//! from repository checkouts, mining contrastive training data from pull
//! requests, dense retrieval over a flat vector index, listwise sliding-window
//! reranking, and multi-granularity Acc@k evaluation. Deterministic local
//! providers ([`embed::HashEmbeddingProvider`], [`rerank::stub`]) stand in for
//! hosted models so every stage runs offline.

pub mod config;
pub mod contrastive;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod io;
pub mod rerank;
pub mod text;
pub mod transport;
pub mod units;

pub mod cli;

pub use error::{Error, ProviderError, Result};
