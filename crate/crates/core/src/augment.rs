//! Feature-meaning-preserving online augmentation and the augmented
//! minibatch with its positive edge set.
//!
//! Each augmentation operator is an [`Augmenter`] registered by name; the
//! training config selects one through [`augmenter_registry`].

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Bernoulli, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::registry::Registry;
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    /// One of `uniform`, `bernoulli`, `normal`, `none`.
    pub kind: String,
    /// Upper bound of the mixing weight for `uniform`, in (0, 1].
    pub p_u: f64,
    /// Keep probability per feature for `bernoulli`, in [0, 1].
    pub p_b: f64,
    /// Noise standard deviation for `normal`, >= 0.
    pub p_n: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            kind: "bernoulli".into(),
            p_u: 0.1,
            p_b: 0.3,
            p_n: 0.3,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            kind: "none".into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        augmenter_registry().get(&self.kind)?;
        match self.kind.as_str() {
            "uniform" if !(self.p_u > 0.0 && self.p_u <= 1.0) => Err(Error::config(format!(
                "augment.p_u must lie in (0, 1], got {}",
                self.p_u
            ))),
            "bernoulli" if !(0.0..=1.0).contains(&self.p_b) => Err(Error::config(format!(
                "augment.p_b must lie in [0, 1], got {}",
                self.p_b
            ))),
            "normal" if !(self.p_n >= 0.0 && self.p_n.is_finite()) => Err(Error::config(format!(
                "augment.p_n must be >= 0, got {}",
                self.p_n
            ))),
            _ => Ok(()),
        }
    }

    pub fn build(&self) -> Result<Arc<dyn Augmenter>> {
        self.validate()?;
        let factory = augmenter_registry().get(&self.kind)?;
        factory(self)
    }
}

/// Produces one augmented row from an original row and a sampled neighbor.
pub trait Augmenter: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether the operator reads the neighbor row at all.
    fn uses_neighbor(&self) -> bool {
        true
    }

    fn augment(&self, x: &[f64], neighbor: &[f64], rng: &mut dyn RngCore, out: &mut [f64]);
}

pub type AugmenterFactory = fn(&AugmentConfig) -> Result<Arc<dyn Augmenter>>;

pub fn augmenter_registry() -> Registry<AugmenterFactory> {
    let mut r: Registry<AugmenterFactory> = Registry::new("augmentation");
    r.register("uniform", |c| Ok(Arc::new(UniformMix { p_u: c.p_u })))
        .register("bernoulli", |c| {
            let mask = Bernoulli::new(c.p_b).map_err(|e| Error::config(e.to_string()))?;
            Ok(Arc::new(BernoulliSwap { mask }))
        })
        .register("normal", |c| {
            let noise = Normal::new(0.0, c.p_n).map_err(|e| Error::config(e.to_string()))?;
            Ok(Arc::new(NeighborNoise { noise }))
        })
        .register("none", |_| Ok(Arc::new(Identity)));
    r
}

/// `(1 - r) x + r x~`
pub fn tau_uniform(x: &[f64], neighbor: &[f64], r_u: f64, out: &mut [f64]) {
    for ((o, &a), &b) in out.iter_mut().zip(x).zip(neighbor) {
        *o = (1.0 - r_u) * a + r_u * b;
    }
}

/// `x . b + x~ . (1 - b)` with a 0/1 mask.
pub fn tau_bernoulli(x: &[f64], neighbor: &[f64], keep: &[bool], out: &mut [f64]) {
    for (((o, &a), &b), &k) in out.iter_mut().zip(x).zip(neighbor).zip(keep) {
        *o = if k { a } else { b };
    }
}

/// `x + (x - x~) . b`
pub fn tau_normal(x: &[f64], neighbor: &[f64], noise: &[f64], out: &mut [f64]) {
    for (((o, &a), &b), &r) in out.iter_mut().zip(x).zip(neighbor).zip(noise) {
        *o = a + (a - b) * r;
    }
}

#[derive(Debug)]
struct UniformMix {
    p_u: f64,
}

impl Augmenter for UniformMix {
    fn name(&self) -> &'static str {
        "uniform"
    }

    fn augment(&self, x: &[f64], neighbor: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        // One mixing weight per row.
        let r_u = rng.random::<f64>() * self.p_u;
        tau_uniform(x, neighbor, r_u, out);
    }
}

#[derive(Debug)]
struct BernoulliSwap {
    mask: Bernoulli,
}

impl Augmenter for BernoulliSwap {
    fn name(&self) -> &'static str {
        "bernoulli"
    }

    fn augment(&self, x: &[f64], neighbor: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let keep: Vec<bool> = (0..x.len()).map(|_| self.mask.sample(rng)).collect();
        tau_bernoulli(x, neighbor, &keep, out);
    }
}

#[derive(Debug)]
struct NeighborNoise {
    noise: Normal<f64>,
}

impl Augmenter for NeighborNoise {
    fn name(&self) -> &'static str {
        "normal"
    }

    fn augment(&self, x: &[f64], neighbor: &[f64], rng: &mut dyn RngCore, out: &mut [f64]) {
        let b: Vec<f64> = (0..x.len()).map(|_| self.noise.sample(rng)).collect();
        tau_normal(x, neighbor, &b, out);
    }
}

#[derive(Debug)]
struct Identity;

impl Augmenter for Identity {
    fn name(&self) -> &'static str {
        "none"
    }

    fn uses_neighbor(&self) -> bool {
        false
    }

    fn augment(&self, x: &[f64], _neighbor: &[f64], _rng: &mut dyn RngCore, out: &mut [f64]) {
        out.copy_from_slice(x);
    }
}

/// `B` original rows followed by their `B` augmentations, plus the merged
/// positive edge set over batch positions.
#[derive(Clone, Debug)]
pub struct AugmentedBatch {
    pub rows: Matrix,
    /// Unordered positive pairs `(a, b)` with `a < b`.
    pub pos_edges: BTreeSet<(usize, usize)>,
    pub batch_size: usize,
    pub origin_ids: Vec<usize>,
    /// Originals that had no neighbor and were augmented against themselves.
    pub fallback_count: usize,
}

impl AugmentedBatch {
    /// Dense symmetric `2B x 2B` positive-pair mask.
    pub fn positive_mask(&self) -> Vec<bool> {
        let n = 2 * self.batch_size;
        let mut mask = vec![false; n * n];
        for &(a, b) in &self.pos_edges {
            mask[a * n + b] = true;
            mask[b * n + a] = true;
        }
        mask
    }
}

/// Positive pairs among the augmented batch: each original with its
/// augmentation, and every graph edge between two originals mirrored onto
/// their augmentations. Edge direction is ignored.
pub fn batch_edges(graph: &AttributedGraph, origin_ids: &[usize]) -> BTreeSet<(usize, usize)> {
    let b = origin_ids.len();
    let pos: HashMap<usize, usize> = origin_ids.iter().enumerate().map(|(p, &id)| (id, p)).collect();
    let mut edges = BTreeSet::new();
    for (a, &id) in origin_ids.iter().enumerate() {
        edges.insert((a, b + a));
        for nb in graph.neighbors(id) {
            if let Some(&c) = pos.get(&nb.index) {
                let (lo, hi) = if a < c { (a, c) } else { (c, a) };
                edges.insert((lo, hi));
                edges.insert((b + lo, b + hi));
            }
        }
    }
    edges
}

pub fn make_augmented_batch(
    graph: &AttributedGraph,
    batch_ids: &[usize],
    augmenter: &dyn Augmenter,
    rng: &mut dyn RngCore,
) -> Result<AugmentedBatch> {
    let b = batch_ids.len();
    if b == 0 {
        return Err(Error::contract("empty batch"));
    }
    let mut seen = BTreeSet::new();
    for &id in batch_ids {
        if id >= graph.n() {
            return Err(Error::contract(format!("batch id {id} out of range for {} nodes", graph.n())));
        }
        if !seen.insert(id) {
            return Err(Error::contract(format!("batch id {id} appears twice")));
        }
    }

    let x = graph.attributes();
    let d = x.cols();
    let mut rows = Matrix::zeros(2 * b, d);
    let mut fallback_count = 0;
    for (p, &id) in batch_ids.iter().enumerate() {
        rows.row_mut(p).copy_from_slice(x.row(id));
    }
    for (p, &id) in batch_ids.iter().enumerate() {
        let neighbors = graph.neighbors(id);
        let partner = if !augmenter.uses_neighbor() {
            id
        } else if neighbors.is_empty() {
            fallback_count += 1;
            id
        } else {
            neighbors[rng.random_range(0..neighbors.len())].index
        };
        let mut out = vec![0.0; d];
        augmenter.augment(x.row(id), x.row(partner), rng, &mut out);
        rows.row_mut(b + p).copy_from_slice(&out);
    }

    Ok(AugmentedBatch {
        rows,
        pos_edges: batch_edges(graph, batch_ids),
        batch_size: b,
        origin_ids: batch_ids.to_vec(),
        fallback_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn line_graph(n: usize, k: usize) -> AttributedGraph {
        let rows: Vec<[f64; 2]> = (0..n).map(|i| [i as f64, (i * i) as f64 * 0.1]).collect();
        AttributedGraph::unsupervised(Matrix::from_rows(&rows).unwrap(), k).unwrap()
    }

    fn apply(kind: &str, x: &[f64], nb: &[f64], seed: u64) -> Vec<f64> {
        let cfg = AugmentConfig {
            kind: kind.into(),
            ..AugmentConfig::default()
        };
        let aug = cfg.build().unwrap();
        let mut out = vec![0.0; x.len()];
        aug.augment(x, nb, &mut stream(seed, "t"), &mut out);
        out
    }

    #[test]
    fn uniform_examples() {
        let mut out = [0.0; 2];
        tau_uniform(&[1.0, 0.0], &[0.0, 1.0], 0.0, &mut out);
        assert_eq!(out, [1.0, 0.0]);
        tau_uniform(&[1.0, 0.0], &[0.0, 1.0], 0.25, &mut out);
        assert_eq!(out, [0.75, 0.25]);
    }

    #[test]
    fn uniform_sample_lies_on_segment_within_bound() {
        let cfg = AugmentConfig {
            kind: "uniform".into(),
            p_u: 0.3,
            ..AugmentConfig::default()
        };
        let aug = cfg.build().unwrap();
        let (x, nb) = ([2.0, -1.0, 4.0], [0.0, 3.0, 4.0]);
        let mut rng = stream(42, "seg");
        for _ in 0..200 {
            let mut out = [0.0; 3];
            aug.augment(&x, &nb, &mut rng, &mut out);
            // every coordinate shares one mixing weight
            let r = (x[0] - out[0]) / (x[0] - nb[0]);
            assert!((0.0..=0.3).contains(&r), "r = {r}");
            assert!(((out[1] - x[1]) / (nb[1] - x[1]) - r).abs() < 1e-12);
            assert_eq!(out[2], 4.0);
        }
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        aug.augment(&x, &nb, &mut stream(1, "s"), &mut a);
        aug.augment(&x, &nb, &mut stream(1, "s"), &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn bernoulli_examples() {
        let (x, nb) = ([1.0, 2.0, 3.0], [9.0, 8.0, 7.0]);
        let mut out = [0.0; 3];
        tau_bernoulli(&x, &nb, &[true; 3], &mut out);
        assert_eq!(out, x);
        tau_bernoulli(&x, &nb, &[false; 3], &mut out);
        assert_eq!(out, nb);
        tau_bernoulli(&x, &nb, &[true, false, true], &mut out);
        assert_eq!(out, [1.0, 8.0, 3.0]);
    }

    #[test]
    fn normal_examples() {
        let mut out = [0.0; 1];
        tau_normal(&[2.0], &[1.0], &[0.0], &mut out);
        assert_eq!(out, [2.0]);
        tau_normal(&[2.0], &[2.0], &[0.7], &mut out);
        assert_eq!(out, [2.0]);
        tau_normal(&[2.0], &[1.0], &[0.5], &mut out);
        assert_eq!(out, [2.5]);
    }

    #[test]
    fn degenerate_parameters_are_identity() {
        let (x, nb) = ([1.0, -2.0, 0.5], [4.0, 4.0, 4.0]);
        let keep_all = AugmentConfig {
            kind: "bernoulli".into(),
            p_b: 1.0,
            ..AugmentConfig::default()
        };
        let no_noise = AugmentConfig {
            kind: "normal".into(),
            p_n: 0.0,
            ..AugmentConfig::default()
        };
        for cfg in [keep_all, no_noise, AugmentConfig::none()] {
            let mut out = [0.0; 3];
            cfg.build().unwrap().augment(&x, &nb, &mut stream(3, "d"), &mut out);
            assert_eq!(out, x, "{}", cfg.kind);
        }
    }

    #[test]
    fn config_validation_names_the_constraint() {
        let bad = AugmentConfig {
            kind: "uniform".into(),
            p_u: 0.0,
            ..AugmentConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("augment.p_u"));
        let unknown = AugmentConfig {
            kind: "mixup".into(),
            ..AugmentConfig::default()
        };
        assert!(matches!(unknown.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn single_row_batch_has_only_the_inter_edge() {
        let g = line_graph(5, 2);
        let aug = AugmentConfig::default().build().unwrap();
        let batch = make_augmented_batch(&g, &[3], aug.as_ref(), &mut stream(0, "b")).unwrap();
        assert_eq!(batch.pos_edges.into_iter().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn two_row_batch_with_graph_edge() {
        let g = line_graph(5, 1);
        assert!(g.has_edge(1, 0));
        let aug = AugmentConfig::default().build().unwrap();
        let batch = make_augmented_batch(&g, &[0, 1], aug.as_ref(), &mut stream(0, "b")).unwrap();
        for e in [(0, 2), (1, 3), (0, 1), (2, 3)] {
            assert!(batch.pos_edges.contains(&e), "{e:?}");
        }
    }

    #[test]
    fn edge_set_matches_comprehension_oracle() {
        let g = line_graph(40, 4);
        let ids: Vec<usize> = vec![3, 17, 4, 5, 30, 2, 29, 11, 12, 31];
        let aug = AugmentConfig::default().build().unwrap();
        let batch = make_augmented_batch(&g, &ids, aug.as_ref(), &mut stream(5, "b")).unwrap();
        let b = ids.len();
        let mut oracle = BTreeSet::new();
        for p in 0..2 * b {
            for q in (p + 1)..2 * b {
                let (op, oq) = (p % b, q % b);
                let inter = q == p + b;
                let same_side = (p < b) == (q < b);
                let linked = g.has_edge(ids[op], ids[oq]) || g.has_edge(ids[oq], ids[op]);
                if inter || (same_side && linked) {
                    oracle.insert((p, q));
                }
            }
        }
        assert_eq!(batch.pos_edges, oracle);
    }

    #[test]
    fn none_duplicates_rows_and_keeps_edges() {
        let g = line_graph(12, 3);
        let ids = [0, 1, 2, 7];
        let none = AugmentConfig::none().build().unwrap();
        let full = AugmentConfig::default().build().unwrap();
        let a = make_augmented_batch(&g, &ids, none.as_ref(), &mut stream(1, "b")).unwrap();
        let b = make_augmented_batch(&g, &ids, full.as_ref(), &mut stream(1, "b")).unwrap();
        for p in 0..4 {
            assert_eq!(a.rows.row(p), a.rows.row(p + 4));
        }
        assert_eq!(a.pos_edges, b.pos_edges);
    }

    #[test]
    fn isolated_node_falls_back_to_itself() {
        let x = Matrix::from_rows(&[[10.05], [0.0], [0.1], [10.0], [10.1], [10.2]]).unwrap();
        let g = AttributedGraph::supervised(x, 2, vec![0, 0, 0, 1, 1, 1]).unwrap();
        let aug = AugmentConfig::default().build().unwrap();
        let batch = make_augmented_batch(&g, &[0, 1], aug.as_ref(), &mut stream(2, "b")).unwrap();
        assert_eq!(batch.fallback_count, 1);
        assert_eq!(batch.rows.row(2), batch.rows.row(0));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let g = line_graph(5, 2);
        let aug = AugmentConfig::default().build().unwrap();
        assert!(make_augmented_batch(&g, &[1, 1], aug.as_ref(), &mut stream(0, "b")).is_err());
    }

    proptest! {
        // Feature j of an augmented row depends only on feature j of the inputs.
        #[test]
        fn no_cross_feature_mixing(
            kind in prop::sample::select(vec!["uniform", "bernoulli", "normal"]),
            x in prop::collection::vec(-5.0f64..5.0, 6),
            nb in prop::collection::vec(-5.0f64..5.0, 6),
            j in 0usize..6,
            bump in -3.0f64..3.0,
            seed in 0u64..1000,
        ) {
            let base = apply(kind, &x, &nb, seed);
            let mut x2 = x.clone();
            let mut nb2 = nb.clone();
            x2[j] += bump;
            nb2[j] -= bump;
            let moved = apply(kind, &x2, &nb2, seed);
            for c in 0..6 {
                if c != j {
                    prop_assert_eq!(base[c], moved[c]);
                }
            }
        }

        #[test]
        fn batch_has_at_least_b_edges(ids in prop::sample::subsequence((0..30usize).collect::<Vec<_>>(), 1..12), seed in 0u64..50) {
            let g = line_graph(30, 3);
            let aug = AugmentConfig::default().build().unwrap();
            let batch = make_augmented_batch(&g, &ids, aug.as_ref(), &mut stream(seed, "p")).unwrap();
            prop_assert!(batch.pos_edges.len() >= ids.len());
        }
    }
}
