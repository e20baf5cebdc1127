//! Exact k-nearest-neighbor graphs over row attributes.

use std::cmp::Ordering;
use std::io::Write;

use crate::error::{Error, Result};
use crate::tensor::{ops, Matrix};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub sq_dist: f64,
}

/// Nodes with attribute rows and directed edges `i -> N_k(i)`.
#[derive(Clone, Debug)]
pub struct AttributedGraph {
    x: Matrix,
    neighbors: Vec<Vec<Neighbor>>,
    k: usize,
    labels: Option<Vec<usize>>,
}

impl AttributedGraph {
    /// Graph whose edges are the plain k-NN lists.
    pub fn unsupervised(x: Matrix, k: usize) -> Result<Self> {
        let neighbors = build_knn_edges(&x, k)?;
        Ok(Self {
            x,
            neighbors,
            k,
            labels: None,
        })
    }

    /// Graph whose edges keep only same-label k-NN pairs.
    pub fn supervised(x: Matrix, k: usize, labels: Vec<usize>) -> Result<Self> {
        let neighbors = build_supervised_edges(&x, k, &labels)?;
        Ok(Self {
            x,
            neighbors,
            k,
            labels: Some(labels),
        })
    }

    /// Attaches labels for reporting without changing the edge set.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::config(format!(
                "{} labels for {} nodes",
                labels.len(),
                self.n()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn attributes(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    pub fn neighbor_ids(&self, i: usize) -> Vec<usize> {
        self.neighbors[i].iter().map(|nb| nb.index).collect()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].iter().any(|nb| nb.index == j)
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum()
    }

    /// Writes `src,dst,distance` lines, distance being Euclidean.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, list) in self.neighbors.iter().enumerate() {
            for nb in list {
                writeln!(out, "{},{},{}", i, nb.index, nb.sq_dist.sqrt())?;
            }
        }
        Ok(())
    }
}

fn check_finite(x: &Matrix) -> Result<()> {
    if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
        let (r, c) = (pos / x.cols().max(1), pos % x.cols().max(1));
        return Err(Error::data(format!("non-finite attribute at row {r}, column {c}")));
    }
    Ok(())
}

fn by_distance_then_index(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.sq_dist
        .total_cmp(&b.sq_dist)
        .then_with(|| a.index.cmp(&b.index))
}

/// For each row, the `k` closest other rows in Euclidean distance, nearest
/// first; equal distances resolve to the smaller index.
pub fn build_knn_edges(x: &Matrix, k: usize) -> Result<Vec<Vec<Neighbor>>> {
    let n = x.rows();
    if k == 0 || k >= n {
        return Err(Error::config(format!("k must satisfy 1 <= k < n (k={k}, n={n})")));
    }
    check_finite(x)?;
    let mut out = Vec::with_capacity(n);
    let mut cand: Vec<Neighbor> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        let xi = x.row(i);
        for j in 0..n {
            if j == i {
                continue;
            }
            let d: f64 = xi.iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            cand.push(Neighbor { index: j, sq_dist: d });
        }
        if k < cand.len() {
            cand.select_nth_unstable_by(k - 1, by_distance_then_index);
            cand.truncate(k);
        }
        cand.sort_by(by_distance_then_index);
        out.push(cand.clone());
    }
    Ok(out)
}

/// k-NN lists intersected with the node's own class; lists may be shorter
/// than `k` or empty.
pub fn build_supervised_edges(x: &Matrix, k: usize, labels: &[usize]) -> Result<Vec<Vec<Neighbor>>> {
    if labels.len() != x.rows() {
        return Err(Error::config(format!(
            "supervised edges need one label per node ({} labels, {} nodes)",
            labels.len(),
            x.rows()
        )));
    }
    let mut counts = std::collections::BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    if let Some((class, _)) = counts.iter().find(|(_, &c)| c < 2) {
        return Err(Error::config(format!(
            "class {class} has fewer than 2 members; supervised edges need at least 2 per class"
        )));
    }
    let mut lists = build_knn_edges(x, k)?;
    for (i, list) in lists.iter_mut().enumerate() {
        list.retain(|nb| labels[nb.index] == labels[i]);
    }
    Ok(lists)
}

/// Squared Euclidean distance between every row of `a` and every row of `b`.
pub fn pairwise_sq_dist(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::dim(format!(
            "pairwise distance between {}-d and {}-d rows",
            a.cols(),
            b.cols()
        )));
    }
    if std::ptr::eq(a, b) {
        return Ok(ops::self_sq_dist(a));
    }
    if a.cols() <= ops::DIRECT_DIST_MAX_COLS {
        let data = a
            .iter_rows()
            .flat_map(|ra| {
                b.iter_rows()
                    .map(move |rb| ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            })
            .collect();
        return Matrix::new(a.rows(), b.rows(), data);
    }
    let na: Vec<f64> = a.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let nb: Vec<f64> = b.iter_rows().map(|r| r.iter().map(|v| v * v).sum()).collect();
    let mut out = a.matmul(&b.transpose())?;
    for i in 0..a.rows() {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (na[i] + nb[j] - 2.0 * *v).max(0.0);
        }
    }
    Ok(out)
}
