//! Comparison rankers: uniform random scores, TF-IDF cosine between CV and
//! vacancy text, and the graph-transformer models that share the network's
//! embedding and pooling path with a single score head.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::metrics::{rank_by_scores, Ranker};
use crate::model::{Architecture, FeatureSource, Model, ModelConfig};
use crate::rng;
use crate::sampler::PairSubGraph;
use crate::text::tokenize;
use crate::train::{train, Clock, TrainConfig, TrainOutcome};

/// Uniform scores in `[0, 1)` drawn in item order from a stream keyed by
/// `(seed, candidate)`.
pub fn random_scores(candidate: &str, n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::rng_for(seed, &["random-ranker", candidate]);
    (0..n).map(|_| r.random::<f64>()).collect()
}

/// Vacancies with random scores, best first.
pub fn random_ranker(candidate: &str, vacancies: &[String], seed: u64) -> Vec<(String, f64)> {
    let scores = random_scores(candidate, vacancies.len(), seed);
    rank_by_scores(&scores)
        .into_iter()
        .map(|i| (vacancies[i].clone(), scores[i]))
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct RandomRanker {
    pub seed: u64,
}

impl Ranker for RandomRanker {
    fn name(&self) -> &str {
        "random"
    }

    fn score_group(&self, group: &[&PairSubGraph]) -> crate::Result<Vec<f64>> {
        let candidate = group.first().map(|g| g.origin.0.as_str()).unwrap_or("");
        Ok(random_scores(candidate, group.len(), self.seed))
    }
}

/// Sparse L2-normalized tf·idf vector, keyed by term.
pub type SparseVector = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfIndex {
    /// term → document frequency
    pub document_frequency: BTreeMap<String, usize>,
    pub documents: usize,
}

impl TfIdfIndex {
    pub fn fit<'a>(docs: impl IntoIterator<Item = &'a str>) -> Self {
        let mut document_frequency: BTreeMap<String, usize> = BTreeMap::new();
        let mut documents = 0;
        for doc in docs {
            documents += 1;
            let mut terms = tokenize(doc);
            terms.sort_unstable();
            terms.dedup();
            for t in terms {
                *document_frequency.entry(t).or_default() += 1;
            }
        }
        Self {
            document_frequency,
            documents,
        }
    }

    /// `ln((1 + N) / (1 + df)) + 1`; `None` outside the vocabulary.
    pub fn idf(&self, term: &str) -> Option<f64> {
        let df = *self.document_frequency.get(term)?;
        Some(libm::log((1.0 + self.documents as f64) / (1.0 + df as f64)) + 1.0)
    }

    /// Raw term counts times idf, L2-normalized; all-zero stays empty.
    pub fn vector(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<String, f64> = BTreeMap::new();
        for t in tokenize(text) {
            *counts.entry(t).or_default() += 1.0;
        }
        let mut out: SparseVector = counts
            .into_iter()
            .filter_map(|(t, c)| self.idf(&t).map(|idf| (t, c * idf)))
            .collect();
        let norm = libm::sqrt(out.values().map(|v| v * v).sum::<f64>());
        if norm > 0.0 {
            for v in out.values_mut() {
                *v /= norm;
            }
        } else {
            out.clear();
        }
        out
    }
}

pub fn cosine(a: &SparseVector, b: &SparseVector) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small.iter().filter_map(|(t, x)| large.get(t).map(|y| x * y)).sum()
}

/// Vacancies ranked by cosine to the CV, best first; ties keep input order.
pub fn tfidf_rank(index: &TfIdfIndex, cv_text: &str, vacancy_texts: &[(String, String)]) -> Vec<(String, f64)> {
    let cv = index.vector(cv_text);
    let scores: Vec<f64> = vacancy_texts
        .iter()
        .map(|(_, text)| cosine(&cv, &index.vector(text)))
        .collect();
    rank_by_scores(&scores)
        .into_iter()
        .map(|i| (vacancy_texts[i].0.clone(), scores[i]))
        .collect()
}

/// TF-IDF over the CV of the group's candidate and each vacancy's text.
#[derive(Debug, Clone)]
pub struct TfIdfRanker {
    pub index: TfIdfIndex,
    /// candidate key → CV text
    pub cv_texts: BTreeMap<String, String>,
    /// vacancy key → vacancy text
    pub vacancy_texts: BTreeMap<String, String>,
}

impl Ranker for TfIdfRanker {
    fn name(&self) -> &str {
        "tfidf"
    }

    fn score_group(&self, group: &[&PairSubGraph]) -> crate::Result<Vec<f64>> {
        let empty = String::new();
        let cv = self.index.vector(group.first().and_then(|g| self.cv_texts.get(&g.origin.0)).unwrap_or(&empty));
        Ok(group
            .iter()
            .map(|g| {
                let text = self.vacancy_texts.get(&g.origin.1).unwrap_or(&empty);
                cosine(&cv, &self.index.vector(text))
            })
            .collect())
    }
}

/// Any trained network used as a ranker through its fused score.
pub struct ModelRanker<'a> {
    pub name: String,
    pub model: &'a Model,
    pub features: &'a dyn FeatureSource,
}

impl Ranker for ModelRanker<'_> {
    fn name(&self) -> &str {
        &self.name
    }

    fn score_group(&self, group: &[&PairSubGraph]) -> crate::Result<Vec<f64>> {
        Ok(self.model.score(group, self.features)?)
    }
}

/// `base` restricted to `depth` transformer layers and one head.
pub fn graph_transformer_config(base: &ModelConfig, depth: usize) -> ModelConfig {
    ModelConfig {
        architecture: Architecture::GraphTransformer { depth },
        ..base.clone()
    }
}

/// The network without its stakeholder layer: first and last stages only.
/// Identical to the two-layer graph transformer.
pub fn ablation_config(base: &ModelConfig) -> ModelConfig {
    graph_transformer_config(base, 2)
}

/// Train a graph-transformer baseline with the shared training loop.
pub fn graph_transformer_ranker(
    depth: usize,
    base: &ModelConfig,
    train_set: &[PairSubGraph],
    validation_set: &[PairSubGraph],
    features: &dyn FeatureSource,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> crate::Result<TrainOutcome> {
    train(&graph_transformer_config(base, depth), train_set, validation_set, features, config, clock)
}

/// Baseline names accepted by the pipeline.
pub const BASELINE_NAMES: [&str; 5] = ["random", "tfidf", "gtrans1", "gtrans2", "ablation"];

/// Model architecture for a trained baseline name.
pub fn baseline_config(name: &str, base: &ModelConfig) -> Option<ModelConfig> {
    match name {
        "gtrans1" => Some(graph_transformer_config(base, 1)),
        "gtrans2" => Some(graph_transformer_config(base, 2)),
        "ablation" => Some(ablation_config(base)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    fn keyed(texts: &[&str]) -> Vec<(String, String)> {
        texts.iter().enumerate().map(|(i, t)| (i.to_string(), t.to_string())).collect()
    }

    #[test]
    fn random_edge_cases() {
        assert!(random_ranker("c", &[], 1).is_empty());
        let v: Vec<String> = (0..5).map(|i| i.to_string()).collect();
        assert_eq!(random_ranker("c", &v, 9), random_ranker("c", &v, 9));
    }

    #[test]
    fn identical_text_ranks_first() {
        let docs = ["welding steel pipes", "python data pipelines", "steel"];
        let idx = TfIdfIndex::fit(docs);
        let ranked = tfidf_rank(&idx, "python data pipelines", &keyed(&docs));
        assert_eq!(ranked[0].0, "1");
        assert!((ranked[0].1 - 1.0).abs() < 1e-12);
        let disjoint = tfidf_rank(&idx, "welding", &keyed(&["python"]));
        assert_eq!(disjoint[0].1, 0.0);
    }

    #[test]
    fn out_of_vocabulary_is_ignored() {
        let idx = TfIdfIndex::fit(["a b", "b c"]);
        assert_eq!(idx.vector("a zzz"), idx.vector("a"));
        assert!(idx.vector("zzz").is_empty());
    }

    #[test]
    fn ablation_is_depth_two() {
        let base = ModelConfig::default();
        assert_eq!(ablation_config(&base), graph_transformer_config(&base, 2));
        assert_eq!(baseline_config("ablation", &base), baseline_config("gtrans2", &base));
        assert!(baseline_config("tfidf", &base).is_none());
    }
}
