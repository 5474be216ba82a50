//! nDCG@k, performance disparity (ΔP) and disparate visibility (ΔV).
//!
//! Gains are `2^max(label, 0) − 1`, so random (−1) and manual (0) rejections
//! both contribute nothing and nDCG stays within `[0, 1]`.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::sampler::PairSubGraph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("group {0:?} has no members")]
    MissingGroup(String),
    #[error("vacancy {0:?} is not in the catalog")]
    UnknownVacancy(String),
    #[error("candidate {0:?} has no group attribute")]
    UnknownCandidate(String),
    #[error("the test set is empty")]
    EmptyTestSet,
}

pub type Result<T> = core::result::Result<T, MetricsError>;

pub fn gain(label: i8) -> f64 {
    libm::exp2(f64::from(label.max(0))) - 1.0
}

/// `1 / log2(rank + 1)` for a 1-based rank.
pub fn discount(rank: usize) -> f64 {
    1.0 / libm::log2(rank as f64 + 1.0)
}

pub fn dcg_at_k(labels_in_order: &[i8], k: usize) -> f64 {
    labels_in_order
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &l)| gain(l) * discount(i + 1))
        .sum()
}

pub fn ideal_dcg_at_k(all_labels: &[i8], k: usize) -> f64 {
    let mut sorted = all_labels.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    dcg_at_k(&sorted, k)
}

/// nDCG@k of a ranked label list against the ideal ordering of
/// `all_labels`; 0 when no item carries gain.
pub fn ndcg_at_k(labels_in_order: &[i8], all_labels: &[i8], k: usize) -> f64 {
    let ideal = ideal_dcg_at_k(all_labels, k);
    if ideal == 0.0 {
        0.0
    } else {
        dcg_at_k(labels_in_order, k) / ideal
    }
}

/// Indices sorted by descending score; equal scores keep input order.
pub fn rank_by_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// nDCG@k of the ranking induced by `scores`.
pub fn ndcg_of_scores(scores: &[f64], labels: &[i8], k: usize) -> f64 {
    let ordered: Vec<i8> = rank_by_scores(scores).into_iter().map(|i| labels[i]).collect();
    ndcg_at_k(&ordered, labels, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub vacancy: String,
    pub score: f64,
    pub label: i8,
}

/// One candidate's vacancies in non-increasing score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub candidate: String,
    pub group: String,
    pub items: Vec<RankedItem>,
}

impl RankedList {
    pub fn from_scores(candidate: &str, group: &str, vacancies: &[String], scores: &[f64], labels: &[i8]) -> Self {
        let items = rank_by_scores(scores)
            .into_iter()
            .map(|i| RankedItem {
                vacancy: vacancies[i].clone(),
                score: scores[i],
                label: labels[i],
            })
            .collect();
        Self {
            candidate: candidate.to_string(),
            group: group.to_string(),
            items,
        }
    }

    pub fn labels(&self) -> Vec<i8> {
        self.items.iter().map(|i| i.label).collect()
    }

    pub fn ndcg(&self, k: usize) -> f64 {
        let labels = self.labels();
        ndcg_at_k(&labels, &labels, k)
    }
}

/// Mean nDCG@10 of the protected group minus that of everyone else.
/// Negative values mean the protected group is served worse.
pub fn performance_disparity(per_candidate: &[(String, f64)], protected: &str) -> Result<f64> {
    let (mut p_sum, mut p_n, mut u_sum, mut u_n) = (0.0, 0usize, 0.0, 0usize);
    let mut other = None;
    for (group, v) in per_candidate {
        if group == protected {
            p_sum += v;
            p_n += 1;
        } else {
            u_sum += v;
            u_n += 1;
            other.get_or_insert(group.clone());
        }
    }
    if p_n == 0 {
        return Err(MetricsError::MissingGroup(protected.to_string()));
    }
    if u_n == 0 {
        return Err(MetricsError::MissingGroup(alloc::format!("not {protected}")));
    }
    Ok(p_sum / p_n as f64 - u_sum / u_n as f64)
}

/// Fraction of catalog vacancies in the protected group.
pub fn catalog_fraction(catalog: &BTreeMap<String, String>, protected: &str) -> f64 {
    if catalog.is_empty() {
        return 0.0;
    }
    catalog.values().filter(|g| *g == protected).count() as f64 / catalog.len() as f64
}

/// Protected share of all top-`k` recommendations minus the protected share
/// of the catalog.
pub fn disparate_visibility(
    lists: &[RankedList],
    catalog: &BTreeMap<String, String>,
    protected: &str,
    k: usize,
) -> Result<f64> {
    let (hits, total) = visibility_counts(lists, catalog, protected, k)?;
    let recommended = if total == 0 { 0.0 } else { hits as f64 / total as f64 };
    Ok(recommended - catalog_fraction(catalog, protected))
}

/// (protected recommendations, all recommendations) over the top-`k` of
/// every list.
pub fn visibility_counts(
    lists: &[RankedList],
    catalog: &BTreeMap<String, String>,
    protected: &str,
    k: usize,
) -> Result<(usize, usize)> {
    let mut hits = 0;
    let mut total = 0;
    for list in lists {
        for item in list.items.iter().take(k) {
            let group = catalog
                .get(&item.vacancy)
                .ok_or_else(|| MetricsError::UnknownVacancy(item.vacancy.clone()))?;
            total += 1;
            if group == protected {
                hits += 1;
            }
        }
    }
    Ok((hits, total))
}

/// Scores every subgraph in a candidate's group; higher is better.
pub trait Ranker {
    fn name(&self) -> &str;
    fn score_group(&self, group: &[&PairSubGraph]) -> crate::Result<Vec<f64>>;
}

/// Scores equal to the true labels.
#[derive(Debug, Default, Clone, Copy)]
pub struct OracleRanker;

impl Ranker for OracleRanker {
    fn name(&self) -> &str {
        "oracle"
    }

    fn score_group(&self, group: &[&PairSubGraph]) -> crate::Result<Vec<f64>> {
        Ok(group.iter().map(|g| f64::from(g.label)).collect())
    }
}

/// Group attributes needed by the fairness metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    /// candidate key → group value (e.g. `rural`)
    pub candidate_groups: BTreeMap<String, String>,
    /// vacancy key → group value; the full catalog
    pub vacancy_groups: BTreeMap<String, String>,
    pub protected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMetrics {
    pub candidate: String,
    pub group: String,
    /// nDCG at each cutoff of [`EvalReport::cutoffs`].
    pub ndcg: Vec<f64>,
    pub protected_in_top10: usize,
    pub top10: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub count: usize,
    pub ndcg: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub cutoffs: Vec<usize>,
    /// Mean over candidates, aligned with `cutoffs`.
    pub ndcg: Vec<f64>,
    pub groups: Vec<GroupMetrics>,
    pub protected: String,
    /// ΔP; absent when either group is empty.
    pub performance_disparity: Option<f64>,
    /// ΔV over top-10 lists.
    pub disparate_visibility: f64,
    /// R_c: protected share of the vacancy catalog.
    pub catalog_protected_fraction: f64,
    pub catalog_size: usize,
    pub recommended_protected: usize,
    pub recommended_total: usize,
    pub candidates: Vec<CandidateMetrics>,
}

const VISIBILITY_CUTOFF: usize = 10;
const DISPARITY_CUTOFF: usize = 10;

impl EvalReport {
    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.cutoffs.iter().position(|&c| c == k).map(|i| self.ndcg[i])
    }

    fn per_candidate_at(&self, k: usize) -> Option<Vec<(String, f64)>> {
        let i = self.cutoffs.iter().position(|&c| c == k)?;
        Some(self.candidates.iter().map(|c| (c.group.clone(), c.ndcg[i])).collect())
    }

    /// ΔP from the per-candidate rows.
    pub fn recompute_performance_disparity(&self) -> Option<f64> {
        performance_disparity(&self.per_candidate_at(DISPARITY_CUTOFF)?, &self.protected).ok()
    }

    /// ΔV from the stored counts.
    pub fn recompute_disparate_visibility(&self) -> f64 {
        let rec = if self.recommended_total == 0 {
            0.0
        } else {
            self.recommended_protected as f64 / self.recommended_total as f64
        };
        rec - self.catalog_protected_fraction
    }
}

/// Rank each candidate's subgraphs with `ranker` and compute every metric.
/// Candidates are visited in key order, subgraphs in corpus order.
pub fn evaluate(
    ranker: &dyn Ranker,
    corpus: &[PairSubGraph],
    ctx: &EvalContext,
    cutoffs: &[usize],
) -> crate::Result<EvalReport> {
    let groups = crate::sampler::group_by_candidate(corpus);
    if groups.is_empty() {
        return Err(MetricsError::EmptyTestSet.into());
    }
    let mut lists = Vec::with_capacity(groups.len());
    for (candidate, members) in &groups {
        let scores = ranker.score_group(members)?;
        let group = ctx
            .candidate_groups
            .get(*candidate)
            .ok_or_else(|| MetricsError::UnknownCandidate(candidate.to_string()))?;
        let vacancies: Vec<String> = members.iter().map(|m| m.origin.1.clone()).collect();
        let labels: Vec<i8> = members.iter().map(|m| m.label).collect();
        lists.push(RankedList::from_scores(candidate, group, &vacancies, &scores, &labels));
    }
    report_from_lists(ranker.name(), &lists, ctx, cutoffs)
}

pub fn report_from_lists(
    model: &str,
    lists: &[RankedList],
    ctx: &EvalContext,
    cutoffs: &[usize],
) -> crate::Result<EvalReport> {
    if lists.is_empty() {
        return Err(MetricsError::EmptyTestSet.into());
    }
    let mut candidates = Vec::with_capacity(lists.len());
    for list in lists {
        let labels = list.labels();
        let (hits, total) = visibility_counts(core::slice::from_ref(list), &ctx.vacancy_groups, &ctx.protected, VISIBILITY_CUTOFF)?;
        candidates.push(CandidateMetrics {
            candidate: list.candidate.clone(),
            group: list.group.clone(),
            ndcg: cutoffs.iter().map(|&k| ndcg_at_k(&labels, &labels, k)).collect(),
            protected_in_top10: hits,
            top10: total,
        });
    }
    let mean = |rows: &[&CandidateMetrics], i: usize| rows.iter().map(|c| c.ndcg[i]).sum::<f64>() / rows.len() as f64;
    let all: Vec<&CandidateMetrics> = candidates.iter().collect();
    let ndcg = (0..cutoffs.len()).map(|i| mean(&all, i)).collect();

    let mut by_group: BTreeMap<&str, Vec<&CandidateMetrics>> = BTreeMap::new();
    for c in &candidates {
        by_group.entry(&c.group).or_default().push(c);
    }
    let groups = by_group
        .iter()
        .map(|(g, rows)| GroupMetrics {
            group: g.to_string(),
            count: rows.len(),
            ndcg: (0..cutoffs.len()).map(|i| mean(rows, i)).collect(),
        })
        .collect();

    let recommended_protected = candidates.iter().map(|c| c.protected_in_top10).sum();
    let recommended_total = candidates.iter().map(|c| c.top10).sum();
    let mut report = EvalReport {
        model: model.to_string(),
        cutoffs: cutoffs.to_vec(),
        ndcg,
        groups,
        protected: ctx.protected.clone(),
        performance_disparity: None,
        disparate_visibility: 0.0,
        catalog_protected_fraction: catalog_fraction(&ctx.vacancy_groups, &ctx.protected),
        catalog_size: ctx.vacancy_groups.len(),
        recommended_protected,
        recommended_total,
        candidates,
    };
    report.performance_disparity = report.recompute_performance_disparity();
    report.disparate_visibility = report.recompute_disparate_visibility();
    Ok(report)
}
