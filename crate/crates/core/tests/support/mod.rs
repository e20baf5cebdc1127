//! Brute-force oracles shared by the integration and acceptance suites.
#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use udrn::augment::{make_augmented_batch, AugmentConfig, AugmentedBatch};
use udrn::graph::AttributedGraph;
use udrn::model::{fp_forward, fs_forward, Architecture, UdrnModel};
use udrn::objective::{exaggerate, fuzzy_cross_entropy, high_similarity, l1_loss, low_similarity, LossConfig};
use udrn::tensor::{Matrix, Tape};
use udrn::trainer::{record_objective, FuzzyStructure};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn distance_oracle(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), b.rows());
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let mut s = 0.0;
            for c in 0..a.cols() {
                let d = a.get(i, c) - b.get(j, c);
                s += d * d;
            }
            out.set(i, j, s);
        }
    }
    out
}

/// Full sort of every other row by (distance, index).
pub fn knn_oracle(x: &Matrix, k: usize) -> Vec<Vec<usize>> {
    (0..x.rows())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..x.rows())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(x.row(i), x.row(j)), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.iter().take(k).map(|&(_, j)| j).collect()
        })
        .collect()
}

/// Rank of `j` among all rows other than `i`, by full sort.
pub fn full_rank(m: &Matrix, i: usize, j: usize) -> usize {
    let mut others: Vec<(f64, usize)> = (0..m.rows())
        .filter(|&l| l != i)
        .map(|l| (sq_dist(m.row(i), m.row(l)), l))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    others.iter().position(|&(_, l)| l == j).unwrap() + 1
}

pub fn smd_oracle(x: &Matrix, xs: &Matrix, k: usize) -> f64 {
    let lists = knn_oracle(x, k);
    let mut total = 0usize;
    for (i, list) in lists.iter().enumerate() {
        for (r0, &j) in list.iter().enumerate() {
            total += (r0 + 1).abs_diff(full_rank(xs, i, j));
        }
    }
    total as f64 / (k * x.rows()) as f64
}

/// Positive pairs by exhaustive enumeration over batch positions.
pub fn batch_edge_oracle(graph: &AttributedGraph, ids: &[usize]) -> BTreeSet<(usize, usize)> {
    let b = ids.len();
    let linked = |p: usize, q: usize| graph.has_edge(ids[p], ids[q]) || graph.has_edge(ids[q], ids[p]);
    let mut out = BTreeSet::new();
    for p in 0..2 * b {
        for q in (p + 1)..2 * b {
            let inter = q == p + b;
            let orig = q < b && linked(p, q);
            let aug = p >= b && linked(p - b, q - b);
            if inter || orig || aug {
                out.insert((p, q));
            }
        }
    }
    out
}

/// The toy problem of the gradient suite: 12 nodes with 8 features and a
/// `[8, 6, 4] + [4, 3, 2]` network whose gates sit away from the threshold.
pub struct ToyProblem {
    pub model: UdrnModel,
    pub batch: AugmentedBatch,
    pub loss: LossConfig,
    pub lambda: f64,
}

pub fn toy_problem(detach_target: bool) -> ToyProblem {
    let x = random_matrix(12, 8, 41);
    let graph = AttributedGraph::unsupervised(x, 3).unwrap();
    let arch = Architecture {
        backbone: vec![6, 4],
        projector: vec![3, 2],
        ..Architecture::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut model = UdrnModel::init(8, &arch, false, &mut rng).unwrap();
    for w in model.gate.w.as_mut_slice() {
        *w = rng.random_range(0.15..0.6);
    }
    // One closed gate: only the L1 term reaches it.
    model.gate.w.as_mut_slice()[5] = 0.04;
    let aug = AugmentConfig::default().build().unwrap();
    let ids: Vec<usize> = (0..12).collect();
    let batch = make_augmented_batch(&graph, &ids, aug.as_ref(), &mut rng).unwrap();
    let loss = LossConfig {
        detach_target,
        ..LossConfig::default()
    };
    ToyProblem {
        model,
        batch,
        loss,
        lambda: 0.05,
    }
}

/// The objective recomputed from plain forward passes; `target` overrides
/// the exaggerated high-dimensional similarities.
pub fn oracle_objective(p: &ToyProblem, model: &UdrnModel, target: Option<&Matrix>) -> f64 {
    let zh = fs_forward(&p.batch.rows, &model.gate, &model.backbone).unwrap();
    let zl = fp_forward(&zh, &model.projector).unwrap();
    let mode = p.loss.exaggeration().unwrap();
    let mut tgt = exaggerate(&high_similarity(&zh), &p.batch.pos_edges, p.loss.beta, mode.as_ref()).unwrap();
    if let Some(t) = target {
        tgt.values = t.clone();
    }
    let low = low_similarity(&zl, p.loss.nu).unwrap();
    fuzzy_cross_entropy(&tgt, &low, p.loss.log_clamp).unwrap() + p.lambda * l1_loss(model.gate.w.as_slice())
}

pub fn frozen_target(p: &ToyProblem) -> Matrix {
    let zh = fs_forward(&p.batch.rows, &p.model.gate, &p.model.backbone).unwrap();
    let mode = p.loss.exaggeration().unwrap();
    exaggerate(&high_similarity(&zh), &p.batch.pos_edges, p.loss.beta, mode.as_ref())
        .unwrap()
        .values
}

pub struct GradientCheck {
    pub max_rel_err: f64,
    pub checked: usize,
    /// Largest analytic magnitude seen on any closed gate, besides the L1 term.
    pub closed_gate_structural: f64,
}

/// Central differences with step `h` over every parameter entry.
pub fn gradient_check(p: &ToyProblem, h: f64) -> GradientCheck {
    let structural = FuzzyStructure::from_config(&p.loss).unwrap();
    let mut tape = Tape::new();
    let obj = record_objective(&mut tape, &p.model, &p.batch, &structural, p.lambda).unwrap();
    let grads = tape.backward(obj.total).unwrap();
    let analytic: Vec<Matrix> = obj.bound.all().iter().map(|&id| grads.get(id)).collect();

    let target = if p.loss.detach_target { Some(frozen_target(p)) } else { None };
    let mut max_rel: f64 = 0.0;
    let mut checked = 0;
    let count = p.model.tensors().len();
    for t in 0..count {
        let len = p.model.tensors()[t].len();
        for e in 0..len {
            let mut plus = p.model.clone();
            plus.tensors_mut()[t].as_mut_slice()[e] += h;
            let mut minus = p.model.clone();
            minus.tensors_mut()[t].as_mut_slice()[e] -= h;
            let fd = (oracle_objective(p, &plus, target.as_ref()) - oracle_objective(p, &minus, target.as_ref())) / (2.0 * h);
            let a = analytic[t].as_slice()[e];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            max_rel = max_rel.max(rel);
            checked += 1;
        }
    }
    let mut closed: f64 = 0.0;
    for (j, &w) in p.model.gate.w.as_slice().iter().enumerate() {
        if !p.model.gate.is_open(j) {
            closed = closed.max((analytic[0].as_slice()[j] - p.lambda * w.signum()).abs());
        }
    }
    GradientCheck {
        max_rel_err: max_rel,
        checked,
        closed_gate_structural: closed,
    }
}
