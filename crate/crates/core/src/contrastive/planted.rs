//! Synthetic corpus with a planted query/code relationship.
//!
//! Queries and code speak different dialects (`qN` vs `cN` for topic `N`),
//! so an untrained encoder has no lexical signal and any retrieval gain after
//! training comes from the contrastive objective. Each query carries 5
//! topics; its positive shares 4, each hard negative shares 2, and each
//! distractor shares none.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Provenance, TrainingTriple};
use crate::error::Result;
use crate::units::{CodeUnit, Span};

use super::ToyEncoder;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantedConfig {
    pub queries: usize,
    pub topics: usize,
    pub topics_per_query: usize,
    pub positive_shared: usize,
    pub hard_negatives: usize,
    pub hard_shared: usize,
    pub distractors: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            queries: 200,
            topics: 60,
            topics_per_query: 5,
            positive_shared: 4,
            hard_negatives: 3,
            hard_shared: 2,
            distractors: 2,
            seed: 17,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    pub config: PlantedConfig,
    pub query_topics: Vec<BTreeSet<usize>>,
    pub queries: Vec<String>,
    /// Every document: positives, hard negatives and distractors of all queries.
    pub documents: Vec<CodeUnit>,
    /// Index into `documents` of each query's positive.
    pub positive_of: Vec<usize>,
    pub triples: Vec<TrainingTriple>,
}

fn doc_text(topics: &[usize]) -> String {
    let mut words: Vec<String> = vec!["def".into(), "handler".into(), "self".into()];
    words.extend(topics.iter().map(|t| format!("c{t}")));
    words.push("return".into());
    words.join(" ")
}

fn doc_unit(id: usize, text: String) -> CodeUnit {
    CodeUnit {
        unit_id: format!("doc{id:05}"),
        file_path: format!("planted/m{}.py", id / 50),
        module_path: vec![],
        function_name: format!("f{id}"),
        qualified_name: format!("planted/m{}.py::f{id}", id / 50),
        span: Span { start: 1, end: 1 },
        source_text: text,
    }
}

impl PlantedCorpus {
    pub fn generate(config: PlantedConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let all: Vec<usize> = (0..config.topics).collect();
        let mut query_topics = Vec::new();
        let mut queries = Vec::new();
        let mut documents = Vec::new();
        let mut positive_of = Vec::new();
        let mut triples = Vec::new();

        let pick_outside = |rng: &mut ChaCha8Rng, chosen: &BTreeSet<usize>, k: usize| -> Vec<usize> {
            let outside: Vec<usize> = all.iter().copied().filter(|t| !chosen.contains(t)).collect();
            outside.choose_multiple(rng, k).copied().collect()
        };

        for qi in 0..config.queries {
            let topics: Vec<usize> = all
                .choose_multiple(&mut rng, config.topics_per_query)
                .copied()
                .collect();
            let set: BTreeSet<usize> = topics.iter().copied().collect();
            let mut query_words = vec!["issue".to_string(), "report".to_string()];
            query_words.extend(topics.iter().map(|t| format!("q{t}")));
            queries.push(query_words.join(" "));

            let mut doc = |shared: usize, rng: &mut ChaCha8Rng| -> CodeUnit {
                let mut ts: Vec<usize> = topics.choose_multiple(rng, shared).copied().collect();
                ts.extend(pick_outside(rng, &set, config.topics_per_query - shared));
                ts.shuffle(rng);
                let unit = doc_unit(documents.len(), doc_text(&ts));
                documents.push(unit.clone());
                unit
            };

            let positive = doc(config.positive_shared, &mut rng);
            let negatives: Vec<CodeUnit> = (0..config.hard_negatives)
                .map(|_| doc(config.hard_shared, &mut rng))
                .collect();
            for _ in 0..config.distractors {
                doc(0, &mut rng);
            }
            positive_of.push(documents.len() - 1 - config.distractors - config.hard_negatives);
            triples.push(TrainingTriple {
                instance_id: format!("planted-{qi}"),
                query_text: queries[qi].clone(),
                positive,
                negatives,
                provenance: Provenance {
                    repo_id: "planted".into(),
                    pr_id: format!("q{qi}"),
                },
                pool: None,
            });
            query_topics.push(set);
        }

        Self {
            config,
            query_topics,
            queries,
            documents,
            positive_of,
            triples,
        }
    }

    /// Share of queries whose positive is the single most similar document
    /// (ties resolved toward the smaller document index).
    pub fn acc_at_1(&self, encoder: &ToyEncoder) -> Result<f64> {
        let docs: Vec<Vec<f64>> = self
            .documents
            .iter()
            .map(|d| encoder.encode_f64(&d.source_text))
            .collect::<Result<_>>()?;
        let mut hits = 0usize;
        for (qi, q) in self.queries.iter().enumerate() {
            let qe = encoder.encode_f64(q)?;
            let mut best = 0usize;
            let mut best_score = f64::NEG_INFINITY;
            for (di, d) in docs.iter().enumerate() {
                let s: f64 = qe.iter().zip(d).map(|(a, b)| a * b).sum();
                if s > best_score {
                    best_score = s;
                    best = di;
                }
            }
            if best == self.positive_of[qi] {
                hits += 1;
            }
        }
        Ok(hits as f64 / self.queries.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_overlaps_hold() {
        let c = PlantedCorpus::generate(PlantedConfig::default());
        assert_eq!(c.queries.len(), 200);
        assert_eq!(c.documents.len(), 200 * 6);
        let topics_of = |text: &str| -> BTreeSet<usize> {
            text.split_whitespace()
                .filter_map(|w| w.strip_prefix('c').and_then(|n| n.parse().ok()))
                .collect()
        };
        for (qi, t) in c.triples.iter().enumerate() {
            let q = &c.query_topics[qi];
            assert_eq!(topics_of(&t.positive.source_text).intersection(q).count(), 4);
            for n in &t.negatives {
                assert_eq!(topics_of(&n.source_text).intersection(q).count(), 2);
            }
            let distractors = &c.documents[c.positive_of[qi] + 4..c.positive_of[qi] + 6];
            for d in distractors {
                assert_eq!(topics_of(&d.source_text).intersection(q).count(), 0);
            }
        }
    }
}
