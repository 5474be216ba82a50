//! LambdaRANK gradients, ADAM and the training loop on toy problems.

use std::collections::BTreeMap;

use proptest::prelude::*;

use okra_core::kg::EntityKind;
use okra_core::model::{Model, ModelConfig};
use okra_core::sampler::{Direction, PairSubGraph, SubEdge, SubNode};
use okra_core::train::{adam_step, flatten, lambdarank, train, unflatten, AdamState, NoClock, TrainConfig, TrainError};

#[test]
fn two_item_toy_lambda() {
    // |ΔnDCG| = 1 − 1/log2(3) for swapping ranks 1 and 2, halved by the sigmoid at 0
    let want = (1.0 - 1.0 / 3f64.log2()) / 2.0;
    let l = lambdarank(&[0.0, 0.0], &[1, 0], 1.0, 10).unwrap();
    assert!((l.grads[0].abs() - want).abs() < 1e-12);
    assert!((l.grads[0].abs() - 0.18454).abs() < 1e-5);
    assert!(l.grads[0] < 0.0 && l.grads[1] > 0.0);
}

#[test]
fn adam_orders_the_toy_pair() {
    let config = TrainConfig { learning_rate: 0.01, ..TrainConfig::default() };
    let mut scores = vec![0.0, 0.0];
    let mut state = AdamState::new(2);
    let mut gap = 0.0;
    for step in 0..50 {
        let g = lambdarank(&scores, &[1, 0], config.sigma, config.ndcg_cutoff).unwrap().grads;
        adam_step(&mut scores, &g, &mut state, &config).unwrap();
        assert!(scores[0] - scores[1] > gap, "step {step}");
        gap = scores[0] - scores[1];
    }
    assert!(scores[0] > scores[1]);
}

#[test]
fn non_finite_gradient_leaves_state_untouched() {
    let config = TrainConfig::default();
    let mut params = vec![1.0, 2.0];
    let mut state = AdamState::new(2);
    let err = adam_step(&mut params, &[f64::NAN, 0.0], &mut state, &config).unwrap_err();
    assert_eq!(err, TrainError::NonFiniteGradient);
    assert_eq!(params, vec![1.0, 2.0]);
    assert_eq!(state, AdamState::new(2));
}

fn group() -> impl Strategy<Value = (Vec<f64>, Vec<i8>)> {
    (2usize..12).prop_flat_map(|n| (prop::collection::vec(-5.0f64..5.0, n), prop::collection::vec(-1i8..=5, n)))
}

proptest! {
    #[test]
    fn lambdas_sum_to_zero_and_push_the_right_way((scores, labels) in group()) {
        prop_assume!(labels.iter().any(|&l| l != labels[0]));
        let l = lambdarank(&scores, &labels, 1.0, 10).unwrap();
        prop_assert!(l.grads.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(l.loss >= 0.0);
        // the best-labeled item is never pushed down
        let top = labels.iter().copied().max().unwrap();
        for (g, &lab) in l.grads.iter().zip(&labels) {
            if lab == top {
                prop_assert!(*g <= 1e-15);
            }
        }
    }

    #[test]
    fn flatten_round_trips(seed in 0u64..50) {
        let model = Model::new(toy_config(seed)).unwrap();
        let flat = flatten(&model.params);
        prop_assert_eq!(flat.len(), model.param_count());
        prop_assert_eq!(unflatten(&model.params, &flat), model.params);
    }
}

fn toy_config(seed: u64) -> ModelConfig {
    ModelConfig {
        text_dim: 6,
        node_dim: 4,
        hash_buckets: 16,
        relation_count: 2,
        offset_scale: 1.0,
        seed,
        ..ModelConfig::default()
    }
}

/// Every candidate sees four vacancies; a vacancy's label is decided by
/// which of two skills it requires.
fn separable_corpus() -> Vec<PairSubGraph> {
    let mut corpus = Vec::new();
    for c in 0..6 {
        for v in 0..4 {
            let good = (v + c) % 2 == 0;
            let skill = if good { "skill:good" } else { "skill:bad" };
            corpus.push(PairSubGraph {
                nodes: vec![
                    SubNode { id: 0, kind: EntityKind::Candidate, feature_ref: format!("candidate:c{c}") },
                    SubNode { id: 1, kind: EntityKind::Vacancy, feature_ref: format!("vacancy:c{c}v{v}") },
                    SubNode { id: 2, kind: EntityKind::Skill, feature_ref: skill.to_string() },
                ],
                edges: vec![SubEdge { src: 1, dst: 2, relation: 0 }, SubEdge { src: 0, dst: 1, relation: 1 }],
                main_candidate: 0,
                main_vacancy: 1,
                label: if good { 2 } else { 0 },
                direction: Direction::CandidateToVacancy,
                origin: (format!("c{c}"), format!("c{c}v{v}")),
            });
        }
    }
    corpus
}

#[test]
fn separable_toy_is_learned_perfectly() {
    let corpus = separable_corpus();
    let features = BTreeMap::new();
    let config = TrainConfig { learning_rate: 0.01, epochs: 30, ..TrainConfig::default() };
    let out = train(&toy_config(1), &corpus, &corpus, &features, &config, &NoClock).unwrap();
    assert_eq!(out.best_validation_ndcg10, 1.0);
    assert!(out.history.validation().next().unwrap().ndcg10 < 1.0, "untrained model is already perfect");
}

#[test]
fn training_is_deterministic() {
    let corpus = separable_corpus();
    let features = BTreeMap::new();
    let config = TrainConfig { learning_rate: 0.01, epochs: 3, seed: 4, ..TrainConfig::default() };
    let a = train(&toy_config(2), &corpus, &corpus, &features, &config, &NoClock).unwrap();
    let b = train(&toy_config(2), &corpus, &corpus, &features, &config, &NoClock).unwrap();
    assert_eq!(flatten(&a.model.params), flatten(&b.model.params));
    assert_eq!(a.history, b.history);
}

#[test]
fn reloaded_parameters_score_identically() {
    let corpus = separable_corpus();
    let features = BTreeMap::new();
    let config = TrainConfig { learning_rate: 0.01, epochs: 2, ..TrainConfig::default() };
    let out = train(&toy_config(3), &corpus, &corpus, &features, &config, &NoClock).unwrap();
    let template = Model::new(toy_config(3)).unwrap();
    let params = unflatten(&template.params, &flatten(&out.model.params));
    let reloaded = Model::from_params(toy_config(3), params).unwrap();
    let batch: Vec<&PairSubGraph> = corpus.iter().collect();
    assert_eq!(out.model.score(&batch, &features).unwrap(), reloaded.score(&batch, &features).unwrap());
}
