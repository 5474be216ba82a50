//! In-memory pipeline stages. The command line wraps these with file IO;
//! tests and experiments call them directly.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use okra_core::kg::{apply_inference, build_graph, EntityId, EntityKind, InferenceRule, KnowledgeGraph, Table};
use okra_core::metrics::{report_from_lists, EvalContext, EvalReport, MetricsError, RankedList};
use okra_core::model::{ExplanationReport, FeatureSource, Model};
use okra_core::sampler::{
    group_by_candidate, negative_sample, sample_pair_subgraph, split_by_candidate, LabelScheme, PairSubGraph,
    SplitAssignment, WalkConfig,
};

use crate::Error;

/// Build the graph from tables and close it under `rules`.
pub fn build_kg(
    tables: &[Table],
    relation_names: &BTreeMap<String, String>,
    rules: &[InferenceRule],
) -> Result<KnowledgeGraph, Error> {
    let graph = build_graph(tables, relation_names)?;
    if rules.is_empty() {
        return Ok(graph);
    }
    Ok(apply_inference(&graph, rules)?)
}

/// One labeled pair by external keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRow {
    pub candidate: String,
    pub vacancy: String,
    pub label: i8,
}

/// Resolve label rows against the graph, add `extra_negatives` uniform
/// negatives, and sample one subgraph per pair. Output order is the order
/// of the rows, then the negatives.
pub fn sample_corpus(
    graph: &KnowledgeGraph,
    labels: &[LabelRow],
    walk: &WalkConfig,
    extra_negatives: usize,
    scheme: LabelScheme,
    seed: u64,
) -> Result<Vec<PairSubGraph>, Error> {
    let mut pairs: Vec<(EntityId, EntityId, i8)> = Vec::with_capacity(labels.len() + extra_negatives);
    for row in labels {
        let c = graph
            .lookup(EntityKind::Candidate, &row.candidate)
            .ok_or_else(|| Error::Data(format!("label references unknown candidate {:?}", row.candidate)))?;
        let v = graph
            .lookup(EntityKind::Vacancy, &row.vacancy)
            .ok_or_else(|| Error::Data(format!("label references unknown vacancy {:?}", row.vacancy)))?;
        if !scheme.contains(row.label) {
            return Err(Error::Data(format!("label {} outside the {scheme:?} scheme", row.label)));
        }
        pairs.push((c, v, row.label));
    }
    if extra_negatives > 0 {
        let labeled: BTreeSet<(EntityId, EntityId)> = pairs.iter().map(|&(c, v, _)| (c, v)).collect();
        pairs.extend(negative_sample(graph, &labeled, extra_negatives, scheme, seed)?);
    }
    pairs
        .par_iter()
        .map(|&(c, v, l)| sample_pair_subgraph(graph, c, v, l, walk, seed).map_err(Error::from))
        .collect()
}

pub fn split(corpus: &[PairSubGraph], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, Error> {
    let candidates: Vec<String> = corpus.iter().map(|s| s.origin.0.clone()).collect();
    Ok(split_by_candidate(&candidates, ratios, seed)?)
}

#[derive(Debug, Clone, Default)]
pub struct SplitCorpus {
    pub train: Vec<PairSubGraph>,
    pub validation: Vec<PairSubGraph>,
    pub test: Vec<PairSubGraph>,
}

pub fn partition(corpus: &[PairSubGraph], splits: &SplitAssignment) -> SplitCorpus {
    let mut out = SplitCorpus::default();
    for sub in corpus {
        let target = match splits.split_of(&sub.origin.0) {
            Some(okra_core::sampler::Split::Train) => &mut out.train,
            Some(okra_core::sampler::Split::Validation) => &mut out.validation,
            Some(okra_core::sampler::Split::Test) => &mut out.test,
            None => continue,
        };
        target.push(sub.clone());
    }
    out
}

/// Score every candidate group in parallel and build the report. Results
/// do not depend on the number of threads.
pub fn evaluate_parallel<F>(
    name: &str,
    score: F,
    corpus: &[PairSubGraph],
    ctx: &EvalContext,
    cutoffs: &[usize],
) -> Result<EvalReport, Error>
where
    F: Fn(&[&PairSubGraph]) -> okra_core::Result<Vec<f64>> + Sync,
{
    let groups: Vec<(&str, Vec<&PairSubGraph>)> = group_by_candidate(corpus).into_iter().collect();
    let lists: Vec<RankedList> = groups
        .par_iter()
        .map(|(candidate, members)| {
            let scores = score(members)?;
            let group = ctx
                .candidate_groups
                .get(*candidate)
                .ok_or_else(|| okra_core::Error::from(MetricsError::UnknownCandidate(candidate.to_string())))?;
            let vacancies: Vec<String> = members.iter().map(|m| m.origin.1.clone()).collect();
            let labels: Vec<i8> = members.iter().map(|m| m.label).collect();
            Ok(RankedList::from_scores(candidate, group, &vacancies, &scores, &labels))
        })
        .collect::<okra_core::Result<_>>()?;
    Ok(report_from_lists(name, &lists, ctx, cutoffs)?)
}

/// Score with a trained network.
pub fn evaluate_model(
    name: &str,
    model: &Model,
    features: &(dyn FeatureSource + Sync),
    corpus: &[PairSubGraph],
    ctx: &EvalContext,
    cutoffs: &[usize],
) -> Result<EvalReport, Error> {
    evaluate_parallel(name, |g| Ok(model.score(g, features)?), corpus, ctx, cutoffs)
}

/// One explanation per subgraph, in corpus order.
pub fn explain_all(
    model: &Model,
    features: &(dyn FeatureSource + Sync),
    corpus: &[PairSubGraph],
) -> Result<Vec<ExplanationReport>, Error> {
    corpus
        .par_iter()
        .map(|s| model.explain(s, features).map_err(|e| Error::from(okra_core::Error::from(e))))
        .collect()
}
