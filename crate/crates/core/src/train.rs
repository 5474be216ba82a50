//! LambdaRANK training with ADAM, best-validation checkpointing and a
//! seeded random hyperparameter search.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ReduceMode, Tensor};
use crate::metrics::{discount, gain, ideal_dcg_at_k, ndcg_of_scores, rank_by_scores};
use crate::model::{FeatureSource, Model, ModelConfig, ModelParams};
use crate::rng;
use crate::sampler::PairSubGraph;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrainError {
    #[error("all labels in the group are equal")]
    DegenerateGroup,
    #[error("a group needs at least two items with one score per label")]
    InvalidGroup,
    #[error("non-finite gradient")]
    NonFiniteGradient,
    #[error("parameter and gradient shapes differ")]
    ShapeMismatch,
    #[error("no trainable group in the corpus")]
    EmptyCorpus,
    #[error("invalid train config: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupBy {
    #[default]
    Candidate,
    /// Rank candidates per vacancy instead.
    Company,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    /// Steepness of the pairwise sigmoid.
    pub sigma: f64,
    /// Cutoff of the nDCG change that weights each pair.
    pub ndcg_cutoff: usize,
    pub group_by: GroupBy,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5.283e-5,
            epochs: 3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            sigma: 1.0,
            ndcg_cutoff: 10,
            group_by: GroupBy::Candidate,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TrainError::InvalidConfig("adam betas must lie in [0, 1)"));
        }
        if self.sigma <= 0.0 || self.ndcg_cutoff == 0 {
            return Err(TrainError::InvalidConfig("sigma and ndcg_cutoff must be positive"));
        }
        Ok(())
    }
}

/// Per-item `∂loss/∂score` plus the pairwise surrogate loss
/// `Σ |ΔnDCG| · ln(1 + exp(−σ(s_i − s_j)))` over pairs with `label_i > label_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lambdas {
    pub grads: Vec<f64>,
    pub loss: f64,
}

/// LambdaRANK gradients of one group. For each pair with
/// `label_i > label_j`, `λ = σ·|ΔnDCG@cutoff(i,j)| / (1 + exp(σ(s_i − s_j)))`
/// is subtracted from item `i` and added to item `j`, so a descent step
/// raises `s_i` and lowers `s_j`. `|ΔnDCG|` swaps `i` and `j` in the ranking
/// induced by the current scores.
pub fn lambdarank(scores: &[f64], labels: &[i8], sigma: f64, cutoff: usize) -> Result<Lambdas, TrainError> {
    if scores.len() != labels.len() || scores.len() < 2 {
        return Err(TrainError::InvalidGroup);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(TrainError::DegenerateGroup);
    }
    let n = scores.len();
    let mut grads = alloc::vec![0.0; n];
    let ideal = ideal_dcg_at_k(labels, cutoff);
    if ideal == 0.0 {
        return Ok(Lambdas { grads, loss: 0.0 });
    }
    let mut rank = alloc::vec![0usize; n];
    for (pos, &item) in rank_by_scores(scores).iter().enumerate() {
        rank[item] = pos + 1;
    }
    let weight = |r: usize| if r <= cutoff { discount(r) } else { 0.0 };
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..n {
            if labels[i] <= labels[j] {
                continue;
            }
            let delta = libm::fabs((gain(labels[i]) - gain(labels[j])) * (weight(rank[i]) - weight(rank[j]))) / ideal;
            let margin = sigma * (scores[i] - scores[j]);
            let lambda = sigma * delta / (1.0 + libm::exp(margin));
            grads[i] -= lambda;
            grads[j] += lambda;
            // ln(1 + e^{-x}) without overflow
            let softplus = if margin > 0.0 {
                libm::log1p(libm::exp(-margin))
            } else {
                -margin + libm::log1p(libm::exp(margin))
            };
            loss += delta * softplus;
        }
    }
    Ok(Lambdas { grads, loss })
}

/// Score gradients only; see [`lambdarank`].
pub fn lambdarank_grads(scores: &[f64], labels: &[i8], sigma: f64, cutoff: usize) -> Result<Vec<f64>, TrainError> {
    lambdarank(scores, labels, sigma, cutoff).map(|l| l.grads)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: alloc::vec![0.0; len],
            v: alloc::vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected ADAM update over a flat parameter vector. Rejects the
/// step, leaving everything untouched, if any gradient is non-finite.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) -> Result<(), TrainError> {
    if params.len() != grads.len() || state.m.len() != params.len() {
        return Err(TrainError::ShapeMismatch);
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient);
    }
    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - libm::pow(config.beta1, t);
    let c2 = 1.0 - libm::pow(config.beta2, t);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = config.beta1 * *m + (1.0 - config.beta1) * g;
        *v = config.beta2 * *v + (1.0 - config.beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= config.learning_rate * m_hat / (libm::sqrt(v_hat) + config.adam_epsilon);
    }
    Ok(())
}

pub fn flatten(params: &ModelParams) -> Vec<f64> {
    params.flat().iter().flat_map(|t| t.data().iter().copied()).collect()
}

/// Inverse of [`flatten`] using `template` for the layout.
pub fn unflatten(template: &ModelParams, values: &[f64]) -> ModelParams {
    let mut offset = 0;
    template.map(&mut |t| {
        let len = t.len();
        let out = Tensor::new(t.rows(), t.cols(), values[offset..offset + len].to_vec()).expect("layout from template");
        offset += len;
        out
    })
}

/// Wall-clock source for history timings.
pub trait Clock {
    fn seconds(&self) -> f64;
}

/// Reports zero; keeps histories reproducible.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoClock;

impl Clock for NoClock {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySplit {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub split: HistorySplit,
    pub ndcg10: f64,
    /// Mean pairwise surrogate per group; 0 for validation rows.
    pub loss: f64,
    /// Cumulative seconds since training started.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn validation(&self) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(|r| r.split == HistorySplit::Validation)
    }

    pub fn train(&self) -> impl Iterator<Item = &HistoryRow> {
        self.rows.iter().filter(|r| r.split == HistorySplit::Train)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub model: Model,
    pub history: TrainHistory,
    pub best_epoch: usize,
    pub best_validation_ndcg10: f64,
    /// Groups skipped because every label was equal.
    pub skipped_groups: usize,
}

fn groups(corpus: &[PairSubGraph], by: GroupBy) -> Vec<Vec<&PairSubGraph>> {
    let mut map: BTreeMap<&str, Vec<&PairSubGraph>> = BTreeMap::new();
    for sub in corpus {
        let key = match by {
            GroupBy::Candidate => sub.origin.0.as_str(),
            GroupBy::Company => sub.origin.1.as_str(),
        };
        map.entry(key).or_default().push(sub);
    }
    map.into_values().collect()
}

/// Mean nDCG@10 over the candidate groups of `corpus`.
pub fn mean_ndcg10(model: &Model, corpus: &[PairSubGraph], features: &dyn FeatureSource) -> crate::Result<f64> {
    let groups = groups(corpus, GroupBy::Candidate);
    if groups.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for g in &groups {
        let scores = model.score(g, features)?;
        let labels: Vec<i8> = g.iter().map(|s| s.label).collect();
        total += ndcg_of_scores(&scores, &labels, 10);
    }
    Ok(total / groups.len() as f64)
}

/// Train from a fresh initialization of `model_config`.
pub fn train(
    model_config: &ModelConfig,
    train_set: &[PairSubGraph],
    validation_set: &[PairSubGraph],
    features: &dyn FeatureSource,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> crate::Result<TrainOutcome> {
    train_from(Model::new(model_config.clone())?, train_set, validation_set, features, config, clock)
}

/// Train starting from `model`. One ADAM step per group; groups are visited
/// in a seeded shuffled order each epoch. The train nDCG@10 of an epoch is
/// averaged over the scores each trainable group had just before its step;
/// epoch 0 scores the whole train set. The returned model is the one
/// with the best validation nDCG@10, the untrained epoch 0 included.
pub fn train_from(
    mut model: Model,
    train_set: &[PairSubGraph],
    validation_set: &[PairSubGraph],
    features: &dyn FeatureSource,
    config: &TrainConfig,
    clock: &dyn Clock,
) -> crate::Result<TrainOutcome> {
    config.validate()?;
    let start = clock.seconds();
    let all = groups(train_set, config.group_by);
    let trainable: Vec<&Vec<&PairSubGraph>> = all
        .iter()
        .filter(|g| g.len() >= 2 && g.iter().any(|s| s.label != g[0].label))
        .collect();
    if trainable.is_empty() {
        return Err(TrainError::EmptyCorpus.into());
    }
    let skipped_groups = all.len() - trainable.len();

    let mut history = TrainHistory::default();
    let record = |history: &mut TrainHistory, epoch: usize, split: HistorySplit, ndcg10: f64, loss: f64| {
        history.rows.push(HistoryRow {
            epoch,
            split,
            ndcg10,
            loss,
            seconds: clock.seconds() - start,
        });
    };
    let train_ndcg = mean_ndcg10(&model, train_set, features)?;
    record(&mut history, 0, HistorySplit::Train, train_ndcg, 0.0);
    let mut best_score = mean_ndcg10(&model, validation_set, features)?;
    record(&mut history, 0, HistorySplit::Validation, best_score, 0.0);
    let mut best_params = model.params.clone();
    let mut best_epoch = 0;

    let mut flat = flatten(&model.params);
    let mut state = AdamState::new(flat.len());
    let mut order: Vec<usize> = (0..trainable.len()).collect();
    for epoch in 1..=config.epochs {
        let mut r = rng::rng(rng::derive_n(rng::derive(config.seed, "epoch"), epoch as u64));
        order.shuffle(&mut r);
        let mut loss_total = 0.0;
        let mut ndcg_total = 0.0;
        for &gi in &order {
            let group = trainable[gi];
            let labels: Vec<i8> = group.iter().map(|s| s.label).collect();
            let mut loss = 0.0;
            let (scores, grads) = model.value_and_grad(group, features, |scores| {
                let l = lambdarank(scores, &labels, config.sigma, config.ndcg_cutoff)
                    .expect("trainable groups are non-degenerate");
                loss = l.loss;
                l.grads
            })?;
            loss_total += loss;
            ndcg_total += ndcg_of_scores(&scores, &labels, 10);
            adam_step(&mut flat, &flatten(&grads), &mut state, config)?;
            model.params = unflatten(&model.params, &flat);
        }
        let n = trainable.len() as f64;
        record(&mut history, epoch, HistorySplit::Train, ndcg_total / n, loss_total / n);
        let val = mean_ndcg10(&model, validation_set, features)?;
        record(&mut history, epoch, HistorySplit::Validation, val, 0.0);
        if val > best_score {
            best_score = val;
            best_params = model.params.clone();
            best_epoch = epoch;
        }
    }
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
        best_validation_ndcg10: best_score,
        skipped_groups,
    })
}

/// Sampling ranges of [`random_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub text_dims: Vec<usize>,
    pub node_dims: Vec<usize>,
    pub poolings: Vec<ReduceMode>,
    pub learning_rate: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            text_dims: alloc::vec![64, 128],
            node_dims: alloc::vec![16, 32],
            poolings: alloc::vec![ReduceMode::Mean, ReduceMode::Max, ReduceMode::Sum],
            learning_rate: (1e-5, 1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub validation_ndcg10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: usize,
    pub trials: Vec<Trial>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &Trial {
        &self.trials[self.best]
    }
}

/// Draw `trials` configurations from `space` around the given bases and
/// keep the argmax of `objective` (validation nDCG@10). Earlier trials win
/// ties.
pub fn random_search(
    space: &SearchSpace,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    trials: usize,
    seed: u64,
    mut objective: impl FnMut(&ModelConfig, &TrainConfig) -> crate::Result<f64>,
) -> crate::Result<SearchOutcome> {
    if trials == 0 || space.text_dims.is_empty() || space.node_dims.is_empty() || space.poolings.is_empty() {
        return Err(TrainError::InvalidConfig("search needs at least one trial and non-empty choices").into());
    }
    let (lo, hi) = space.learning_rate;
    if !(lo > 0.0 && hi >= lo) {
        return Err(TrainError::InvalidConfig("learning-rate range must be positive and ordered").into());
    }
    let mut r = rng::rng_for(seed, &["search"]);
    let mut out = Vec::with_capacity(trials);
    let mut best = 0;
    for i in 0..trials {
        let model = ModelConfig {
            text_dim: space.text_dims[r.random_range(0..space.text_dims.len())],
            node_dim: space.node_dims[r.random_range(0..space.node_dims.len())],
            pooling: space.poolings[r.random_range(0..space.poolings.len())],
            ..base_model.clone()
        };
        let u: f64 = r.random();
        let train = TrainConfig {
            learning_rate: libm::exp(libm::log(lo) + u * (libm::log(hi) - libm::log(lo))),
            ..base_train.clone()
        };
        let score = objective(&model, &train)?;
        if i > 0 && score > out.iter().map(|t: &Trial| t.validation_ndcg10).fold(f64::NEG_INFINITY, f64::max) {
            best = i;
        }
        out.push(Trial {
            model,
            train,
            validation_ndcg10: score,
        });
    }
    Ok(SearchOutcome { best, trials: out })
}

/// Names of the history columns, in CSV order.
pub const HISTORY_COLUMNS: [&str; 5] = ["epoch", "split", "ndcg10", "loss", "seconds"];

impl HistorySplit {
    pub fn as_str(self) -> &'static str {
        match self {
            HistorySplit::Train => "train",
            HistorySplit::Validation => "validation",
        }
    }
}

impl core::str::FromStr for HistorySplit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "train" => Ok(HistorySplit::Train),
            "validation" => Ok(HistorySplit::Validation),
            other => Err(alloc::format!("unknown split {other:?}")),
        }
    }
}
