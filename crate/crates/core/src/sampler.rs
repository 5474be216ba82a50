//! Per-pair subgraph extraction by bounded random walks, the reversed
//! (vacancy → candidate) view, local relabeling, negative sampling and the
//! candidate-level train/validation/test split.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::kg::{EntityId, EntityKind, KnowledgeGraph, Triple};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SamplerError {
    #[error("anchor {0:?} is missing or has the wrong kind")]
    MissingAnchor(EntityId),
    #[error("asked for {requested} negative pairs but only {available} unlabeled pairs exist")]
    ExhaustedSpace { requested: usize, available: usize },
    #[error("walk length and walks per anchor must be at least 1")]
    InvalidWalkConfig,
    #[error("split ratios must be non-negative and sum to 1")]
    InvalidRatios,
}

pub type Result<T> = core::result::Result<T, SamplerError>;

/// Relevance label scheme of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LabelScheme {
    /// −1 random rejection, 0 manual rejection, 1..=5 increasingly successful.
    #[default]
    Proprietary,
    /// 0 no interaction, 1 interaction, 2 application, 3 hire.
    Zhaopin,
}

impl LabelScheme {
    pub fn min_label(self) -> i8 {
        match self {
            LabelScheme::Proprietary => -1,
            LabelScheme::Zhaopin => 0,
        }
    }

    pub fn max_label(self) -> i8 {
        match self {
            LabelScheme::Proprietary => 5,
            LabelScheme::Zhaopin => 3,
        }
    }

    /// Label given to randomly sampled non-matching pairs.
    pub fn negative_label(self) -> i8 {
        self.min_label()
    }

    /// Label given to labeled pairs that were rejected.
    pub fn rejection_label(self) -> i8 {
        0
    }

    pub fn contains(self, label: i8) -> bool {
        (self.min_label()..=self.max_label()).contains(&label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    CandidateToVacancy,
    VacancyToCandidate,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::CandidateToVacancy => Direction::VacancyToCandidate,
            Direction::VacancyToCandidate => Direction::CandidateToVacancy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubNode {
    pub id: u32,
    pub kind: EntityKind,
    /// Lookup handle into the feature sidecar; not an identifier.
    pub feature_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(u32, u32, u16)", into = "(u32, u32, u16)")]
pub struct SubEdge {
    pub src: u32,
    pub dst: u32,
    pub relation: u16,
}

impl From<(u32, u32, u16)> for SubEdge {
    fn from((src, dst, relation): (u32, u32, u16)) -> Self {
        Self { src, dst, relation }
    }
}

impl From<SubEdge> for (u32, u32, u16) {
    fn from(e: SubEdge) -> Self {
        (e.src, e.dst, e.relation)
    }
}

/// Neighborhood of one candidate–vacancy pair; the unit being ranked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSubGraph {
    pub nodes: Vec<SubNode>,
    pub edges: Vec<SubEdge>,
    pub main_candidate: u32,
    pub main_vacancy: u32,
    pub label: i8,
    pub direction: Direction,
    /// External keys of the (candidate, vacancy) pair.
    pub origin: (String, String),
}

impl PairSubGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Checks the structural invariants of a locally relabeled subgraph.
    pub fn is_well_formed(&self, scheme: LabelScheme) -> bool {
        let n = self.nodes.len() as u32;
        self.nodes.iter().enumerate().all(|(i, node)| node.id == i as u32)
            && self.main_candidate < n
            && self.main_vacancy < n
            && self.main_candidate != self.main_vacancy
            && self.edges.iter().all(|e| e.src < n && e.dst < n)
            && scheme.contains(self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkConfig {
    /// Maximum number of edges per walk.
    pub max_length: usize,
    pub walks_per_anchor: usize,
    /// Draw each walk's step budget uniformly from `1..=max_length` instead
    /// of always walking `max_length` steps.
    pub uniform_length: bool,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            max_length: 7,
            walks_per_anchor: 32,
            uniform_length: false,
        }
    }
}

/// One uniform random walk of at most `max_length` steps from `start`,
/// treating edges as undirected. Returns the traversed triples in their
/// stored orientation.
pub fn random_walk(graph: &KnowledgeGraph, start: EntityId, max_length: usize, rng: &mut rng::Rng) -> Vec<Triple> {
    let mut path = Vec::with_capacity(max_length);
    let mut cur = start;
    for _ in 0..max_length {
        let deg = graph.degree(cur);
        if deg == 0 {
            break;
        }
        let t = graph.incident(cur, rng.random_range(0..deg));
        cur = if t.subject == cur { t.object } else { t.subject };
        path.push(t);
    }
    path
}

fn pair_rng(graph: &KnowledgeGraph, candidate: EntityId, vacancy: EntityId, seed: u64) -> rng::Rng {
    rng::rng_for(
        seed,
        &[&graph.entity(candidate).key, &graph.entity(vacancy).key],
    )
}

/// Union of `walks_per_anchor` walks from each anchor, relabeled locally
/// with the candidate at 0 and the vacancy at 1. The stream is derived from
/// `(seed, candidate key, vacancy key)`, so the result does not depend on
/// which pairs were sampled before.
pub fn sample_pair_subgraph(
    graph: &KnowledgeGraph,
    candidate: EntityId,
    vacancy: EntityId,
    label: i8,
    walk: &WalkConfig,
    seed: u64,
) -> Result<PairSubGraph> {
    if walk.max_length == 0 || walk.walks_per_anchor == 0 {
        return Err(SamplerError::InvalidWalkConfig);
    }
    for (id, kind) in [(candidate, EntityKind::Candidate), (vacancy, EntityKind::Vacancy)] {
        if id.index() >= graph.entity_count() || graph.entity(id).kind != kind {
            return Err(SamplerError::MissingAnchor(id));
        }
    }
    let mut rng = pair_rng(graph, candidate, vacancy, seed);
    let mut order = Vec::new();
    let mut seen_nodes = BTreeSet::new();
    let mut visit = |id: EntityId, order: &mut Vec<EntityId>| {
        if seen_nodes.insert(id) {
            order.push(id);
        }
    };
    visit(candidate, &mut order);
    visit(vacancy, &mut order);

    let mut seen_edges = BTreeSet::new();
    let mut edges = Vec::new();
    for anchor in [candidate, vacancy] {
        for _ in 0..walk.walks_per_anchor {
            let steps = if walk.uniform_length {
                rng.random_range(1..=walk.max_length)
            } else {
                walk.max_length
            };
            for t in random_walk(graph, anchor, steps, &mut rng) {
                visit(t.subject, &mut order);
                visit(t.object, &mut order);
                if seen_edges.insert(t) {
                    edges.push(t);
                }
            }
        }
    }

    let raw = PairSubGraph {
        nodes: order
            .iter()
            .map(|&id| {
                let e = graph.entity(id);
                SubNode {
                    id: id.0,
                    kind: e.kind,
                    feature_ref: e.qualified_key(),
                }
            })
            .collect(),
        edges: edges
            .iter()
            .map(|t| SubEdge {
                src: t.subject.0,
                dst: t.object.0,
                relation: t.predicate.0,
            })
            .collect(),
        main_candidate: candidate.0,
        main_vacancy: vacancy.0,
        label,
        direction: Direction::CandidateToVacancy,
        origin: (
            graph.entity(candidate).key.clone(),
            graph.entity(vacancy).key.clone(),
        ),
    };
    Ok(relabel_local(&raw))
}

/// Swap every edge's endpoints and flip the direction flag.
pub fn reverse(sub: &PairSubGraph) -> PairSubGraph {
    let mut out = sub.clone();
    for e in &mut out.edges {
        core::mem::swap(&mut e.src, &mut e.dst);
    }
    out.direction = sub.direction.flipped();
    out
}

/// Renumber nodes densely in list order. Identifiers of different subgraphs
/// share nothing but the `0..n` range; only `feature_ref` ties a node back
/// to the source graph.
pub fn relabel_local(sub: &PairSubGraph) -> PairSubGraph {
    let map: BTreeMap<u32, u32> = sub
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i as u32))
        .collect();
    PairSubGraph {
        nodes: sub
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| SubNode {
                id: i as u32,
                kind: n.kind,
                feature_ref: n.feature_ref.clone(),
            })
            .collect(),
        edges: sub
            .edges
            .iter()
            .map(|e| SubEdge {
                src: map[&e.src],
                dst: map[&e.dst],
                relation: e.relation,
            })
            .collect(),
        main_candidate: map[&sub.main_candidate],
        main_vacancy: map[&sub.main_vacancy],
        label: sub.label,
        direction: sub.direction,
        origin: sub.origin.clone(),
    }
}

/// Uniformly sample `count` distinct pairs from `candidates × vacancies`
/// that are not in `excluded`.
pub fn sample_unlabeled_pairs<T: Ord + Copy>(
    candidates: &[T],
    vacancies: &[T],
    excluded: &BTreeSet<(T, T)>,
    count: usize,
    seed: u64,
) -> Result<Vec<(T, T)>> {
    let total = candidates.len() * vacancies.len();
    let blocked = excluded
        .iter()
        .filter(|(c, v)| candidates.binary_search(c).is_ok() && vacancies.binary_search(v).is_ok())
        .count();
    let available = total - blocked;
    if count > available {
        return Err(SamplerError::ExhaustedSpace {
            requested: count,
            available,
        });
    }
    let mut rng = rng::rng(seed);
    if count * 2 <= available {
        let mut chosen = BTreeSet::new();
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let p = (
                candidates[rng.random_range(0..candidates.len())],
                vacancies[rng.random_range(0..vacancies.len())],
            );
            if !excluded.contains(&p) && chosen.insert(p) {
                out.push(p);
            }
        }
        Ok(out)
    } else {
        let mut pool: Vec<(T, T)> = candidates
            .iter()
            .flat_map(|&c| vacancies.iter().map(move |&v| (c, v)))
            .filter(|p| !excluded.contains(p))
            .collect();
        let (picked, _) = pool.partial_shuffle(&mut rng, count);
        Ok(picked.to_vec())
    }
}

/// Uniform negatives over all candidate–vacancy pairs of `graph` that are
/// absent from `labeled`, each tagged with the scheme's negative label.
pub fn negative_sample(
    graph: &KnowledgeGraph,
    labeled: &BTreeSet<(EntityId, EntityId)>,
    count: usize,
    scheme: LabelScheme,
    seed: u64,
) -> Result<Vec<(EntityId, EntityId, i8)>> {
    let candidates: Vec<EntityId> = graph.entities_of_kind(EntityKind::Candidate).map(|e| e.id).collect();
    let vacancies: Vec<EntityId> = graph.entities_of_kind(EntityKind::Vacancy).map(|e| e.id).collect();
    let pairs = sample_unlabeled_pairs(&candidates, &vacancies, labeled, count, seed)?;
    Ok(pairs
        .into_iter()
        .map(|(c, v)| (c, v, scheme.negative_label()))
        .collect())
}

/// Subgraphs grouped by candidate key (key order), keeping corpus order
/// within each group.
pub fn group_by_candidate(corpus: &[PairSubGraph]) -> BTreeMap<&str, Vec<&PairSubGraph>> {
    let mut groups: BTreeMap<&str, Vec<&PairSubGraph>> = BTreeMap::new();
    for sub in corpus {
        groups.entry(sub.origin.0.as_str()).or_default().push(sub);
    }
    groups
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
}

impl SplitAssignment {
    pub fn split_of(&self, candidate: &str) -> Option<Split> {
        if self.train.contains(candidate) {
            Some(Split::Train)
        } else if self.validation.contains(candidate) {
            Some(Split::Validation)
        } else if self.test.contains(candidate) {
            Some(Split::Test)
        } else {
            None
        }
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.validation.len(), self.test.len())
    }
}

/// Largest-remainder apportionment of `n` items over `ratios`; ties in the
/// remainder go to the earlier slot.
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let quotas = ratios.map(|r| r * n as f64);
    let mut sizes = quotas.map(|q| libm::floor(q + 1e-9) as usize);
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    let frac = |i: usize| quotas[i] - sizes[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap_or(core::cmp::Ordering::Equal));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Seeded shuffle of the (sorted, deduplicated) candidate keys, cut by
/// largest-remainder sizes.
pub fn split_by_candidate(candidates: &[String], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if ratios.iter().any(|&r| r < 0.0) || libm::fabs(ratios.iter().sum::<f64>() - 1.0) > 1e-9 {
        return Err(SamplerError::InvalidRatios);
    }
    let mut keys: Vec<String> = candidates.to_vec();
    keys.sort();
    keys.dedup();
    keys.shuffle(&mut rng::rng_for(seed, &["split"]));
    let [a, b, _] = apportion(keys.len(), ratios);
    let mut it = keys.into_iter();
    Ok(SplitAssignment {
        train: it.by_ref().take(a).collect(),
        validation: it.by_ref().take(b).collect(),
        test: it.collect(),
    })
}
