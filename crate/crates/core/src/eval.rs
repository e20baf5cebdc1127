//! Structure-preservation and discriminative-accuracy metrics, plus the
//! synthetic generator used by the acceptance runs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::build_knn_edges;
use crate::rng;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmdResult {
    /// Mean absolute neighbor-rank difference (lower is better).
    pub mean_rank_diff: f64,
    /// `100 * (1 - mean_rank_diff / (n - 1))`.
    pub score: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Compares every k-NN edge's rank under `x` with the rank of the same
/// neighbor among all other rows of `xs`. Equal distances rank by index.
pub fn smd(x: &Matrix, xs: &Matrix, k: usize) -> Result<SmdResult> {
    let n = x.rows();
    if xs.rows() != n {
        return Err(Error::dim(format!("smd over {n} rows against {} rows", xs.rows())));
    }
    if k >= n {
        return Err(Error::config(format!("smd needs k < n (k={k}, n={n})")));
    }
    let lists = build_knn_edges(x, k)?;
    let mut dist = vec![0.0; n];
    let mut total = 0.0;
    for (i, list) in lists.iter().enumerate() {
        let xi = xs.row(i);
        for (l, d) in dist.iter_mut().enumerate() {
            *d = sq_dist(xi, xs.row(l));
        }
        for (rank0, nb) in list.iter().enumerate() {
            let j = nb.index;
            let dj = dist[j];
            let closer = (0..n)
                .filter(|&l| l != i && l != j && (dist[l] < dj || (dist[l] == dj && l < j)))
                .count();
            total += ((rank0 + 1) as f64 - (closer + 1) as f64).abs();
        }
    }
    let mean = total / (k * n) as f64;
    Ok(SmdResult {
        mean_rank_diff: mean,
        score: 100.0 * (1.0 - mean / (n - 1) as f64),
    })
}

/// Per-class index split into train / validation / test.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StratifiedSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// 80/10/10 split within each class, shuffled by `seed`; every index list
/// comes back sorted.
pub fn stratified_split(labels: &[usize], seed: u64) -> StratifiedSplit {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut r = rng::stream(seed, "split");
    let mut split = StratifiedSplit {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for members in by_class.values_mut() {
        members.shuffle(&mut r);
        let m = members.len();
        let n_train = ((m as f64 * 0.8).round() as usize).clamp(1, m);
        let n_val = ((m as f64 * 0.1).round() as usize).min(m - n_train);
        split.train.extend_from_slice(&members[..n_train]);
        split.validation.extend_from_slice(&members[n_train..n_train + n_val]);
        split.test.extend_from_slice(&members[n_train + n_val..]);
    }
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split
}

/// Majority vote among the `k` nearest reference rows. A tied vote goes to
/// the tied class whose member is nearest.
pub fn knn_predict(reference: &Matrix, labels: &[usize], queries: &Matrix, k: usize) -> Result<Vec<usize>> {
    if reference.rows() != labels.len() {
        return Err(Error::config(format!(
            "{} labels for {} reference rows",
            labels.len(),
            reference.rows()
        )));
    }
    if reference.rows() == 0 {
        return Err(Error::data("k-NN prediction needs at least one reference row"));
    }
    if reference.cols() != queries.cols() {
        return Err(Error::dim(format!(
            "reference rows are {}-d, queries are {}-d",
            reference.cols(),
            queries.cols()
        )));
    }
    let k = k.clamp(1, reference.rows());
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(reference.rows());
    let mut out = Vec::with_capacity(queries.rows());
    for q in queries.iter_rows() {
        cand.clear();
        cand.extend(reference.iter_rows().enumerate().map(|(j, r)| (sq_dist(q, r), j)));
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, order);
            cand.truncate(k);
        }
        cand.sort_by(order);
        let mut votes: BTreeMap<usize, usize> = BTreeMap::new();
        for &(_, j) in &cand {
            *votes.entry(labels[j]).or_default() += 1;
        }
        let best = votes.values().copied().max().unwrap_or(0);
        let winner = cand
            .iter()
            .map(|&(_, j)| labels[j])
            .find(|l| votes[l] == best)
            .expect("non-empty vote");
        out.push(winner);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnAccuracy {
    pub accuracy: f64,
    pub test_size: usize,
    pub warnings: Vec<String>,
}

/// k-NN classifier fit on the stratified train split and scored on the
/// test split.
pub fn knn_accuracy(z: &Matrix, labels: &[usize], k: usize, split_seed: u64) -> Result<KnnAccuracy> {
    if labels.len() != z.rows() {
        return Err(Error::config(format!("{} labels for {} rows", labels.len(), z.rows())));
    }
    let split = stratified_split(labels, split_seed);
    if split.test.is_empty() {
        return Err(Error::data("test split is empty; too few rows per class"));
    }
    let mut warnings = Vec::new();
    let mut train_counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &i in &split.train {
        *train_counts.entry(labels[i]).or_default() += 1;
    }
    for (class, &c) in &train_counts {
        if c < k {
            warnings.push(format!("class {class} has {c} training members (< k={k}); voting over available"));
        }
    }
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let pred = knn_predict(&z.select_rows(&split.train), &train_labels, &z.select_rows(&split.test), k)?;
    let hits = pred.iter().zip(&split.test).filter(|(p, &i)| **p == labels[i]).count();
    Ok(KnnAccuracy {
        accuracy: hits as f64 / split.test.len() as f64,
        test_size: split.test.len(),
        warnings,
    })
}

/// `|selected ∩ informative| / |informative|`.
pub fn feature_recovery(selected: &[usize], informative: &[usize]) -> f64 {
    if informative.is_empty() {
        return 1.0;
    }
    let hits = informative.iter().filter(|i| selected.contains(i)).count();
    hits as f64 / informative.len() as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// `U(-1, 1)`.
    Uniform,
    /// Normal with the variance of `U(-1, 1)`.
    Normal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub informative_dims: usize,
    pub noise_dims: usize,
    pub clusters: usize,
    pub cluster_std: f64,
    pub noise_law: NoiseLaw,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 1500,
            informative_dims: 10,
            noise_dims: 40,
            clusters: 3,
            cluster_std: 0.1,
            noise_law: NoiseLaw::Uniform,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.informative_dims < 1 {
            return Err(Error::config("synthetic informative_dims must be >= 1"));
        }
        if self.clusters < 2 {
            return Err(Error::config("synthetic clusters must be >= 2"));
        }
        if self.n < self.clusters {
            return Err(Error::config("synthetic n must be at least the cluster count"));
        }
        if !(self.cluster_std >= 0.0 && self.cluster_std.is_finite()) {
            return Err(Error::config("synthetic cluster_std must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.informative_dims + self.noise_dims
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub x: Matrix,
    pub labels: Vec<usize>,
    /// Sorted column indices that carry cluster signal.
    pub informative: Vec<usize>,
}

/// Cluster centers in `[-1, 1]` on the informative columns, isotropic
/// Gaussian spread around them; noise columns are drawn identically for
/// every class. Column roles are shuffled by the seed. Row `i` has label
/// `i % clusters`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let d = spec.dim();
    let mut r = rng::stream(spec.seed, "synthetic");
    let mut columns: Vec<usize> = (0..d).collect();
    columns.shuffle(&mut r);
    let mut informative = columns[..spec.informative_dims].to_vec();
    let noise_cols = &columns[spec.informative_dims..];

    let centers: Vec<Vec<f64>> = (0..spec.clusters)
        .map(|_| (0..spec.informative_dims).map(|_| r.random_range(-1.0..=1.0)).collect())
        .collect();
    let spread = Normal::new(0.0, spec.cluster_std).map_err(|e| Error::config(e.to_string()))?;
    let normal_noise = Normal::new(0.0, (1.0f64 / 3.0).sqrt()).expect("valid std");

    let mut x = Matrix::zeros(spec.n, d);
    let labels: Vec<usize> = (0..spec.n).map(|i| i % spec.clusters).collect();
    for (i, &label) in labels.iter().enumerate() {
        let row = x.row_mut(i);
        for (c, &col) in informative.iter().enumerate() {
            row[col] = centers[label][c] + spread.sample(&mut r);
        }
        for &col in noise_cols {
            row[col] = match spec.noise_law {
                NoiseLaw::Uniform => r.random_range(-1.0..=1.0),
                NoiseLaw::Normal => normal_noise.sample(&mut r),
            };
        }
    }
    informative.sort_unstable();
    Ok(SyntheticData { x, labels, informative })
}
