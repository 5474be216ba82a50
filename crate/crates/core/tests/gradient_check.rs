//! Reverse-mode gradients against central finite differences.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use okra_core::autodiff::{Axis, ReduceMode, Segments, Tape, Tensor, Var};
use okra_core::kg::EntityKind;
use okra_core::model::{Model, ModelConfig};
use okra_core::sampler::{Direction, PairSubGraph, SubEdge, SubNode};
use okra_core::train::{flatten, unflatten};

const INSTANCES: u64 = 100;
const H: f64 = 1e-6;

/// Values bounded away from zero so kinks (leaky_relu, max ties) stay more
/// than `H` from every probe.
fn tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        let mag = rng.random_range(0.05..1.5);
        if rng.random_bool(0.5) {
            mag
        } else {
            -mag
        }
    })
}

fn positive(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(0.2..3.0))
}

/// Build `op` over `inputs` on a fresh tape and contract its output with
/// fixed random weights into a scalar.
fn evaluate(
    inputs: &[Tensor],
    weights: &Tensor,
    op: &dyn Fn(&mut Tape, &[Var]) -> Var,
    grads: bool,
) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = op(&mut tape, &vars);
    assert_eq!(tape.shape(out), weights.shape(), "weights must match the output shape");
    let w = tape.constant(weights.clone());
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum_all(prod).unwrap();
    let value = tape.value(loss).item();
    if !grads {
        return (value, Vec::new());
    }
    tape.backward(loss).unwrap();
    let g = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();
    (value, g)
}

/// Worst `|analytic − fd| / max(1, |analytic|)` over every input entry.
fn worst_error(inputs: &[Tensor], out_shape: [usize; 2], op: &dyn Fn(&mut Tape, &[Var]) -> Var, rng: &mut ChaCha8Rng) -> f64 {
    let weights = tensor(rng, out_shape[0], out_shape[1]);
    let (_, analytic) = evaluate(inputs, &weights, op, true);
    let mut worst = 0.0f64;
    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let mut probe = inputs.to_vec();
            probe[i].data_mut()[j] = t.data()[j] + H;
            let (up, _) = evaluate(&probe, &weights, op, false);
            probe[i].data_mut()[j] = t.data()[j] - H;
            let (down, _) = evaluate(&probe, &weights, op, false);
            let fd = (up - down) / (2.0 * H);
            let a = analytic[i].data()[j];
            worst = worst.max((a - fd).abs() / a.abs().max(1.0));
        }
    }
    worst
}

/// Run `instances` random cases of one primitive; `make` returns inputs,
/// output shape and the op.
fn check(name: &str, make: impl Fn(&mut ChaCha8Rng) -> (Vec<Tensor>, [usize; 2], Box<dyn Fn(&mut Tape, &[Var]) -> Var>)) {
    let mut rng = ChaCha8Rng::seed_from_u64(name.bytes().map(u64::from).sum());
    for case in 0..INSTANCES {
        let (inputs, shape, op) = make(&mut rng);
        let err = worst_error(&inputs, shape, op.as_ref(), &mut rng);
        assert!(err < 1e-5, "{name} case {case}: error {err}");
    }
}

fn dims(rng: &mut ChaCha8Rng) -> (usize, usize) {
    (rng.random_range(1..5), rng.random_range(1..5))
}

#[test]
fn matmul() {
    check("matmul", |rng| {
        let (r, k) = dims(rng);
        let c = rng.random_range(1..5);
        let inputs = vec![tensor(rng, r, k), tensor(rng, k, c)];
        (inputs, [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.matmul(v[0], v[1]).unwrap()))
    });
}

#[test]
fn matmul_chain_five_by_four() {
    check("matmul_chain", |rng| {
        let inputs = vec![tensor(rng, 5, 4), tensor(rng, 4, 4), tensor(rng, 4, 3)];
        (
            inputs,
            [5, 3],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let ab = t.matmul(v[0], v[1]).unwrap();
                t.matmul(ab, v[2]).unwrap()
            }),
        )
    });
}

#[test]
fn add_and_mul() {
    check("add", |rng| {
        let (r, c) = dims(rng);
        let inputs = vec![tensor(rng, r, c), tensor(rng, r, c)];
        (inputs, [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.add(v[0], v[1]).unwrap()))
    });
    check("mul", |rng| {
        let (r, c) = dims(rng);
        let inputs = vec![tensor(rng, r, c), tensor(rng, r, c)];
        (inputs, [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.mul(v[0], v[1]).unwrap()))
    });
}

#[test]
fn concat_both_axes() {
    check("concat_rows", |rng| {
        let (r, c) = dims(rng);
        let r2 = rng.random_range(1..4);
        let inputs = vec![tensor(rng, r, c), tensor(rng, r2, c)];
        (inputs, [r + r2, c], Box::new(|t: &mut Tape, v: &[Var]| t.concat(v, Axis::Rows).unwrap()))
    });
    check("concat_cols", |rng| {
        let (r, c) = dims(rng);
        let c2 = rng.random_range(1..4);
        let inputs = vec![tensor(rng, r, c), tensor(rng, r, c2)];
        (inputs, [r, c + c2], Box::new(|t: &mut Tape, v: &[Var]| t.concat(v, Axis::Cols).unwrap()))
    });
}

#[test]
fn elementwise_functions() {
    check("leaky_relu", |rng| {
        let (r, c) = dims(rng);
        let slope = rng.random_range(0.01..0.5);
        (vec![tensor(rng, r, c)], [r, c], Box::new(move |t: &mut Tape, v: &[Var]| t.leaky_relu(v[0], slope)))
    });
    check("tanh", |rng| {
        let (r, c) = dims(rng);
        (vec![tensor(rng, r, c)], [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.tanh(v[0])))
    });
    check("exp", |rng| {
        let (r, c) = dims(rng);
        (vec![tensor(rng, r, c)], [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.exp(v[0])))
    });
    check("log", |rng| {
        let (r, c) = dims(rng);
        (vec![positive(rng, r, c)], [r, c], Box::new(|t: &mut Tape, v: &[Var]| t.log(v[0])))
    });
    check("affine", |rng| {
        let (r, c) = dims(rng);
        let (a, b) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        (vec![tensor(rng, r, c)], [r, c], Box::new(move |t: &mut Tape, v: &[Var]| t.affine(v[0], a, b)))
    });
}

#[test]
fn gather_rows_with_repeats() {
    check("gather_rows", |rng| {
        let (r, c) = dims(rng);
        let n = rng.random_range(1..7);
        let index: Vec<usize> = (0..n).map(|_| rng.random_range(0..r)).collect();
        let index: Arc<[usize]> = index.into();
        (
            vec![tensor(rng, r, c)],
            [n, c],
            Box::new(move |t: &mut Tape, v: &[Var]| t.gather_rows(v[0], index.clone()).unwrap()),
        )
    });
}

fn segments(rng: &mut ChaCha8Rng, rows: usize) -> Arc<Segments> {
    let count = rng.random_range(1..=rows);
    // every segment gets at least one row; ids must be sorted
    let mut ids: Vec<usize> = (0..count).collect();
    ids.extend((count..rows).map(|_| rng.random_range(0..count)));
    ids.sort_unstable();
    Arc::new(Segments::new(ids, count).unwrap())
}

#[test]
fn segment_softmax() {
    check("segment_softmax", |rng| {
        let rows = rng.random_range(1..8);
        let seg = segments(rng, rows);
        (
            vec![tensor(rng, rows, 1)],
            [rows, 1],
            Box::new(move |t: &mut Tape, v: &[Var]| t.segment_softmax(v[0], &seg).unwrap()),
        )
    });
}

#[test]
fn segment_reduce_every_mode() {
    for mode in [ReduceMode::Mean, ReduceMode::Max, ReduceMode::Sum] {
        check(&format!("segment_reduce_{mode:?}"), move |rng| {
            let rows = rng.random_range(1..8);
            let cols = rng.random_range(1..4);
            let seg = segments(rng, rows);
            let count = seg.count();
            (
                vec![tensor(rng, rows, cols)],
                [count, cols],
                Box::new(move |t: &mut Tape, v: &[Var]| t.segment_reduce(v[0], &seg, mode).unwrap()),
            )
        });
    }
}

#[test]
fn reductions_and_repeats() {
    check("sum_all", |rng| {
        let (r, c) = dims(rng);
        (vec![tensor(rng, r, c)], [1, 1], Box::new(|t: &mut Tape, v: &[Var]| t.sum_all(v[0]).unwrap()))
    });
    check("row_sums", |rng| {
        let (r, c) = dims(rng);
        (vec![tensor(rng, r, c)], [r, 1], Box::new(|t: &mut Tape, v: &[Var]| t.row_sums(v[0]).unwrap()))
    });
    check("repeat_cols", |rng| {
        let r = rng.random_range(1..5);
        let n = rng.random_range(1..4);
        (
            vec![tensor(rng, r, 1)],
            [r, n],
            Box::new(move |t: &mut Tape, v: &[Var]| t.repeat_cols(v[0], n).unwrap()),
        )
    });
    check("repeat_rows", |rng| {
        let c = rng.random_range(1..5);
        let n = rng.random_range(1..4);
        (
            vec![tensor(rng, 1, c)],
            [n, c],
            Box::new(move |t: &mut Tape, v: &[Var]| t.repeat_rows(v[0], n).unwrap()),
        )
    });
    check("linear", |rng| {
        let (r, k) = dims(rng);
        let c = rng.random_range(1..5);
        let inputs = vec![tensor(rng, r, k), tensor(rng, k, c), tensor(rng, 1, c)];
        (
            inputs,
            [r, c],
            Box::new(|t: &mut Tape, v: &[Var]| t.linear(v[0], v[1], Some(v[2])).unwrap()),
        )
    });
}

const KINDS: [EntityKind; 4] = [EntityKind::Skill, EntityKind::Language, EntityKind::JobType, EntityKind::TextDoc];

/// Six-node subgraph: the two anchors plus four random neighbors, one of
/// which may be a text document.
fn random_subgraph(rng: &mut ChaCha8Rng, relations: u16) -> (PairSubGraph, BTreeMap<String, String>) {
    let mut nodes = vec![
        SubNode { id: 0, kind: EntityKind::Candidate, feature_ref: "candidate:c".into() },
        SubNode { id: 1, kind: EntityKind::Vacancy, feature_ref: "vacancy:v".into() },
    ];
    let mut features = BTreeMap::new();
    for id in 2..6u32 {
        let kind = KINDS[rng.random_range(0..KINDS.len())];
        let feature_ref = format!("{}:n{id}", kind.as_str());
        if kind == EntityKind::TextDoc {
            let words: Vec<String> = (0..rng.random_range(0..8)).map(|_| format!("w{}", rng.random_range(0..20))).collect();
            features.insert(feature_ref.clone(), words.join(" "));
        }
        nodes.push(SubNode { id, kind, feature_ref });
    }
    let mut edges = Vec::new();
    for _ in 0..rng.random_range(3..10) {
        let src = rng.random_range(0..6);
        let dst = rng.random_range(0..6);
        if src != dst {
            edges.push(SubEdge { src, dst, relation: rng.random_range(0..relations) });
        }
    }
    edges.sort();
    edges.dedup();
    let direction = if rng.random_bool(0.5) { Direction::CandidateToVacancy } else { Direction::VacancyToCandidate };
    let sub = PairSubGraph {
        nodes,
        edges,
        main_candidate: 0,
        main_vacancy: 1,
        label: 1,
        direction,
        origin: ("c".into(), "v".into()),
    };
    (sub, features)
}

/// The fused score of a full network, every parameter, 20 random subgraphs
/// and initializations.
#[test]
fn full_forward_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    for case in 0..20u64 {
        let config = ModelConfig {
            text_dim: 5,
            node_dim: 3,
            hash_buckets: 8,
            relation_count: 3,
            offset_scale: 1.0,
            seed: case,
            ..ModelConfig::default()
        };
        let mut model = Model::new(config).unwrap();
        // larger weights than the initializer so every term is exercised
        let scaled: Vec<f64> = flatten(&model.params).iter().map(|v| v * 3.0).collect();
        model.params = unflatten(&model.params, &scaled);
        let (sub, features) = random_subgraph(&mut rng, 3);
        let (_, grads) = model.value_and_grad(&[&sub], &features, |_| vec![1.0]).unwrap();
        let base = flatten(&model.params);
        let analytic = flatten(&grads);
        let score = |values: &[f64]| {
            let m = Model::from_params(model.config.clone(), unflatten(&model.params, values)).unwrap();
            m.score(&[&sub], &features).unwrap()[0]
        };
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            let up = score(&p);
            p[i] -= 2.0 * h;
            let down = score(&p);
            let fd = (up - down) / (2.0 * h);
            let a = analytic[i];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-4, "case {case} parameter {i}: analytic {a}, finite difference {fd}");
        }
    }
}
